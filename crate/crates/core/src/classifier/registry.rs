use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{ClassifierError, Result};

pub const DEFAULT_RATIO_THRESHOLD: f64 = 0.8;
/// Distance below which a lone class accepts a query.
pub const DEFAULT_ABSOLUTE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_TARGET_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(ClassifierError::InvalidInput(
                "feature vector is empty".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ClassifierError::InvalidInput(format!(
                "feature component {i} is not finite"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &FeatureVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub name: String,
    pub prototype: FeatureVector,
    pub sample_count: u64,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
}

/// Running mean of the samples shown for one new class.
#[derive(Debug, Clone, PartialEq)]
pub struct TeachingSession {
    name: String,
    sum: Vec<f64>,
    count: usize,
    target: usize,
}

impl TeachingSession {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn is_full(&self) -> bool {
        self.count >= self.target
    }

    pub fn add_sample(&mut self, feature: &FeatureVector) -> Result<()> {
        if feature.dim() != self.sum.len() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.sum.len(),
                got: feature.dim(),
            });
        }
        if self.is_full() {
            return Err(ClassifierError::SessionFull(self.target));
        }
        for (s, v) in self.sum.iter_mut().zip(feature.values()) {
            *s += v;
        }
        self.count += 1;
        Ok(())
    }

    /// Mean of the samples so far.
    pub fn prototype(&self) -> Option<FeatureVector> {
        (self.count > 0)
            .then(|| FeatureVector(self.sum.iter().map(|s| s / self.count as f64).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyOptions {
    pub ratio_threshold: f64,
    pub absolute_threshold: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            ratio_threshold: DEFAULT_RATIO_THRESHOLD,
            absolute_threshold: DEFAULT_ABSOLUTE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    /// Accepted class, `None` for Unknown.
    pub label: Option<String>,
    /// Nearest prototype regardless of acceptance.
    pub nearest: String,
    pub d1: f64,
    pub d2: Option<f64>,
    /// `d1 / d2`; absent with a single class.
    pub ratio: Option<f64>,
    /// Decided by the absolute distance threshold because only one class exists.
    pub single_class: bool,
}

impl ClassificationResult {
    pub fn is_unknown(&self) -> bool {
        self.label.is_none()
    }
}

/// Ordered set of class prototypes of a fixed feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRegistry {
    dim: usize,
    classes: Vec<ClassRecord>,
}

impl ClassRegistry {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(ClassifierError::InvalidInput(
                "feature dimension must be positive".into(),
            ));
        }
        Ok(Self {
            dim,
            classes: Vec::new(),
        })
    }

    pub(crate) fn from_parts(dim: usize, classes: Vec<ClassRecord>) -> Result<Self> {
        let mut reg = Self::new(dim)?;
        for c in classes {
            reg.check_name(&c.name)?;
            reg.check_dim(&c.prototype)?;
            reg.classes.push(c);
        }
        Ok(reg)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassRecord] {
        &self.classes
    }

    pub fn get(&self, name: &str) -> Option<&ClassRecord> {
        self.classes.iter().find(|c| c.name == name)
    }

    fn check_name(&self, name: &str) -> Result<()> {
        if name.trim().is_empty() || name.chars().any(char::is_control) {
            return Err(ClassifierError::InvalidName);
        }
        if self.get(name).is_some() {
            return Err(ClassifierError::DuplicateClass(name.to_string()));
        }
        Ok(())
    }

    fn check_dim(&self, f: &FeatureVector) -> Result<()> {
        if f.dim() != self.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                got: f.dim(),
            });
        }
        Ok(())
    }

    pub fn begin_teaching(&self, name: &str, target_samples: usize) -> Result<TeachingSession> {
        self.check_name(name)?;
        if target_samples == 0 {
            return Err(ClassifierError::InvalidInput(
                "target sample count must be positive".into(),
            ));
        }
        Ok(TeachingSession {
            name: name.to_string(),
            sum: vec![0.0; self.dim],
            count: 0,
            target: target_samples,
        })
    }

    pub fn finalize_class(&mut self, session: TeachingSession) -> Result<ClassRecord> {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        self.finalize_class_at(session, now)
    }

    /// As [`finalize_class`](Self::finalize_class) with an explicit timestamp.
    pub fn finalize_class_at(
        &mut self,
        session: TeachingSession,
        created_at: u64,
    ) -> Result<ClassRecord> {
        self.check_name(&session.name)?;
        if session.sum.len() != self.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                got: session.sum.len(),
            });
        }
        let prototype = session.prototype().ok_or(ClassifierError::EmptySession)?;
        let record = ClassRecord {
            name: session.name,
            prototype,
            sample_count: session.count as u64,
            created_at,
        };
        self.classes.push(record.clone());
        Ok(record)
    }

    pub fn remove_class(&mut self, name: &str) -> Result<ClassRecord> {
        let i = self
            .classes
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| ClassifierError::UnknownClass(name.to_string()))?;
        Ok(self.classes.remove(i))
    }

    pub fn classify(
        &self,
        query: &FeatureVector,
        ratio_threshold: f64,
    ) -> Result<ClassificationResult> {
        self.classify_with(
            query,
            &ClassifyOptions {
                ratio_threshold,
                ..Default::default()
            },
        )
    }

    pub fn classify_with(
        &self,
        query: &FeatureVector,
        opts: &ClassifyOptions,
    ) -> Result<ClassificationResult> {
        if !(opts.ratio_threshold > 0.0 && opts.ratio_threshold <= 1.0) {
            return Err(ClassifierError::InvalidInput(format!(
                "ratio threshold must lie in (0, 1], got {}",
                opts.ratio_threshold
            )));
        }
        if self.classes.is_empty() {
            return Err(ClassifierError::EmptyRegistry);
        }
        self.check_dim(query)?;
        let (mut best, mut d1, mut d2) = (0, f64::INFINITY, f64::INFINITY);
        for (i, c) in self.classes.iter().enumerate() {
            let d = query.distance(&c.prototype);
            if d < d1 {
                d2 = d1;
                d1 = d;
                best = i;
            } else if d < d2 {
                d2 = d;
            }
        }
        let nearest = self.classes[best].name.clone();
        if self.classes.len() == 1 {
            let label = (d1 < opts.absolute_threshold).then(|| nearest.clone());
            return Ok(ClassificationResult {
                label,
                nearest,
                d1,
                d2: None,
                ratio: None,
                single_class: true,
            });
        }
        // Two coincident prototypes with the query on them are maximally ambiguous.
        let ratio = if d2 > 0.0 { d1 / d2 } else { 1.0 };
        let label = (ratio < opts.ratio_threshold).then(|| nearest.clone());
        Ok(ClassificationResult {
            label,
            nearest,
            d1,
            d2: Some(d2),
            ratio: Some(ratio),
            single_class: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn two_class() -> ClassRegistry {
        let mut reg = ClassRegistry::new(2).unwrap();
        for (name, p) in [("A", [0.0, 0.0]), ("B", [2.0, 0.0])] {
            let mut s = reg.begin_teaching(name, 1).unwrap();
            s.add_sample(&fv(&p)).unwrap();
            reg.finalize_class_at(s, 0).unwrap();
        }
        reg
    }

    #[test]
    fn session_mean_and_limits() {
        let reg = ClassRegistry::new(2).unwrap();
        let mut s = reg.begin_teaching("cup", 2).unwrap();
        assert_eq!(s.count(), 0);
        s.add_sample(&fv(&[1.0, 2.0])).unwrap();
        assert_eq!(s.prototype().unwrap(), fv(&[1.0, 2.0]));
        s.add_sample(&fv(&[3.0, 0.0])).unwrap();
        assert_eq!(s.prototype().unwrap(), fv(&[2.0, 1.0]));
        assert_eq!(
            s.add_sample(&fv(&[0.0, 0.0])),
            Err(ClassifierError::SessionFull(2))
        );
        let mut t = reg.begin_teaching("x", 5).unwrap();
        assert!(matches!(
            t.add_sample(&fv(&[1.0])),
            Err(ClassifierError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn names_are_checked() {
        let reg = two_class();
        assert_eq!(reg.begin_teaching("", 3), Err(ClassifierError::InvalidName));
        assert_eq!(
            reg.begin_teaching("A", 3),
            Err(ClassifierError::DuplicateClass("A".into()))
        );
        let mut reg = reg;
        let empty = reg.begin_teaching("C", 3).unwrap();
        assert_eq!(
            reg.finalize_class(empty),
            Err(ClassifierError::EmptySession)
        );
    }

    #[test]
    fn ratio_rule_examples() {
        let reg = two_class();
        let r = reg.classify(&fv(&[0.5, 0.0]), 0.8).unwrap();
        assert_eq!(r.label.as_deref(), Some("A"));
        assert!((r.ratio.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let exact = reg.classify(&fv(&[2.0, 0.0]), 0.8).unwrap();
        assert_eq!(
            (exact.label.as_deref(), exact.ratio),
            (Some("B"), Some(0.0))
        );
        let mid = reg.classify(&fv(&[1.0, 3.0]), 0.8).unwrap();
        assert!(mid.is_unknown());
        assert_eq!(mid.ratio, Some(1.0));
    }

    #[test]
    fn single_class_uses_absolute_threshold() {
        let mut reg = two_class();
        reg.remove_class("B").unwrap();
        let near = reg.classify(&fv(&[0.3, 0.0]), 0.8).unwrap();
        assert!(near.single_class && near.label.as_deref() == Some("A") && near.ratio.is_none());
        assert!(reg.classify(&fv(&[0.6, 0.0]), 0.8).unwrap().is_unknown());
        assert_eq!(
            reg.remove_class("B"),
            Err(ClassifierError::UnknownClass("B".into()))
        );
        reg.remove_class("A").unwrap();
        assert_eq!(
            reg.classify(&fv(&[0.0, 0.0]), 0.8),
            Err(ClassifierError::EmptyRegistry)
        );
    }

    #[test]
    fn threshold_must_be_in_unit_interval() {
        let reg = two_class();
        assert!(reg.classify(&fv(&[0.0, 0.0]), 0.0).is_err());
        assert!(reg.classify(&fv(&[0.0, 0.0]), 1.5).is_err());
        assert!(reg.classify(&fv(&[0.0, 0.0, 0.0]), 0.8).is_err());
    }
}
