use std::io::{Read, Write};

use super::{PiecewiseTrajectory, TrajError, Waypoint};

const WAYPOINT_HEADER: [&str; 4] = ["x", "y", "z", "psi"];

/// Parse a waypoint CSV with header `x,y,z,psi`.
pub fn parse_waypoints<R: Read>(reader: R) -> Result<Vec<Waypoint>, TrajError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| TrajError::Parse(e.to_string()))?;
    if header.iter().ne(WAYPOINT_HEADER.iter().copied()) {
        return Err(TrajError::Parse(format!("expected header `x,y,z,psi`, got `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| TrajError::Parse(e.to_string()))?;
        let mut vals = [0.0; 4];
        for (j, v) in vals.iter_mut().enumerate() {
            let field = rec.get(j).ok_or_else(|| TrajError::Parse(format!("row {}: missing column {}", i + 1, WAYPOINT_HEADER[j])))?;
            *v = field
                .parse::<f64>()
                .map_err(|e| TrajError::Parse(format!("row {}: `{field}`: {e}", i + 1)))?;
            if !v.is_finite() {
                return Err(TrajError::NonFiniteWaypoint(i));
            }
        }
        out.push(Waypoint::new(vals[0], vals[1], vals[2], vals[3]));
    }
    Ok(out)
}

pub fn read_waypoints(path: &std::path::Path) -> Result<Vec<Waypoint>, TrajError> {
    parse_waypoints(std::fs::File::open(path)?)
}

/// Sample the trajectory every `dt` seconds (including the final knot) as
/// `t,x,y,z,psi,vx,vy,vz,ax,ay,az`.
pub fn write_trajectory_csv<W: Write>(
    traj: &PiecewiseTrajectory,
    dt: f64,
    mut out: W,
) -> Result<(), TrajError> {
    if !(dt > 0.0) {
        return Err(TrajError::Parse(format!("sample interval must be positive, got {dt}")));
    }
    writeln!(out, "t,x,y,z,psi,vx,vy,vz,ax,ay,az")?;
    let steps = (traj.duration() / dt).floor() as usize;
    let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    if traj.duration() - times.last().copied().unwrap_or(0.0) > 1e-9 {
        times.push(traj.duration());
    }
    for t in times {
        let p = traj.eval(t, 0);
        let v = traj.eval(t, 1);
        let a = traj.eval(t, 2);
        writeln!(
            out,
            "{t:.6},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            p[0], p[1], p[2], p[3], v[0], v[1], v[2], a[0], a[1], a[2]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{allocate_times, min_snap};

    #[test]
    fn parses_waypoints() {
        let text = "x,y,z,psi\n0,0,1,0\n2, 0 ,1,0.5\n";
        let w = parse_waypoints(text.as_bytes()).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1], Waypoint::new(2.0, 0.0, 1.0, 0.5));
    }

    #[test]
    fn rejects_bad_waypoint_files() {
        assert!(parse_waypoints("a,b,c,d\n1,2,3,4\n".as_bytes()).is_err());
        assert!(parse_waypoints("x,y,z,psi\n1,2,3\n".as_bytes()).is_err());
        assert!(parse_waypoints("x,y,z,psi\n1,2,nan,0\n".as_bytes()).is_err());
        assert!(parse_waypoints("x,y,z,psi\n1,2,q,0\n".as_bytes()).is_err());
    }

    #[test]
    fn exports_sampled_trajectory() {
        let w = parse_waypoints("x,y,z,psi\n0,0,1,0\n1,0,1,0\n".as_bytes()).unwrap();
        let traj = min_snap(&w, &allocate_times(&w, 0.5).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, 0.5, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x,y,z,psi,vx,vy,vz,ax,ay,az");
        assert_eq!(lines.len(), 1 + 5);
        assert!(lines[5].starts_with("2.000000,1.0000000"));
    }
}
