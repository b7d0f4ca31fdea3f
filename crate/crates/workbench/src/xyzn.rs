//! Plain-text point cloud with normals.
//!
//! A `# xyzn <width> <height>` header, then one `x y z nx ny nz` line per
//! pixel with both a valid point and a valid normal, row-major, sensor frame.

use std::io::Write;

use surfteach_core::geometry::{NormalMap, OrganizedPointCloud};

pub fn write_xyzn<W: Write>(cloud: &OrganizedPointCloud, normals: &NormalMap, mut w: W) -> std::io::Result<usize> {
    writeln!(w, "# xyzn {} {}", cloud.width(), cloud.height())?;
    let mut rows = 0;
    for v in 0..cloud.height() {
        for u in 0..cloud.width() {
            if let (Some(p), Some(n)) = (cloud.get(u, v), normals.get(u, v)) {
                writeln!(w, "{:.6} {:.6} {:.6} {:.6} {:.6} {:.6}", p.x, p.y, p.z, n.x, n.y, n.z)?;
                rows += 1;
            }
        }
    }
    w.flush()?;
    Ok(rows)
}
