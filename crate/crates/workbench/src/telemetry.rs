use std::io::Write;

use serde::{Deserialize, Serialize};

/// One decimated sample of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    /// Index within the run, for ordering and de-duplication.
    pub seq: u64,
    /// Seconds since the run started.
    pub t: f64,
    pub q: Vec<f64>,
    /// Tool position (m).
    pub position: [f64; 3],
    /// `[p - p_d; log(R R_d^T)]`.
    pub error: [f64; 6],
    /// Estimated normal force (N).
    pub fn_meas: f64,
    /// Commanded normal force, zero while the force loop is off (N).
    pub fn_des: f64,
    pub contact: bool,
    pub saturated: bool,
}

pub fn csv_header(dof: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..dof).map(|i| format!("q{i}")));
    cols.extend(["px", "py", "pz", "ex", "ey", "ez", "erx", "ery", "erz", "fn_meas", "fn_des", "contact", "saturated"].map(String::from));
    cols.join(",")
}

pub fn csv_row(f: &TelemetryFrame) -> String {
    let mut row = format!("{:.3}", f.t);
    for v in f.q.iter().chain(&f.position).chain(&f.error) {
        row.push_str(&format!(",{v:.9}"));
    }
    row.push_str(&format!(",{:.6},{:.6},{},{}", f.fn_meas, f.fn_des, f.contact as u8, f.saturated as u8));
    row
}

pub fn write_csv<W: Write>(frames: &[TelemetryFrame], dof: usize, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", csv_header(dof))?;
    for f in frames {
        writeln!(w, "{}", csv_row(f))?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_lists_every_column() {
        let h = csv_header(7);
        assert_eq!(
            h,
            "t,q0,q1,q2,q3,q4,q5,q6,px,py,pz,ex,ey,ez,erx,ery,erz,fn_meas,fn_des,contact,saturated"
        );
        let f = TelemetryFrame {
            seq: 0,
            t: 0.01,
            q: vec![0.0; 7],
            position: [0.5, 0.0, 0.1],
            error: [0.0; 6],
            fn_meas: 9.5,
            fn_des: 10.0,
            contact: true,
            saturated: false,
        };
        assert_eq!(csv_row(&f).split(',').count(), h.split(',').count());
        assert!(csv_row(&f).ends_with(",9.500000,10.000000,1,0"));
    }
}
