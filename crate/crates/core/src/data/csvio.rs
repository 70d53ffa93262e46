//! Dataset and flight-log CSV files.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::{DataError, LogRecord, Sample};
use crate::quad::{MotorSpeeds, Quat};

pub const DATASET_HEADER: [&str; 9] = ["rel_px", "rel_py", "rel_pz", "rel_vx", "rel_vy", "rel_vz", "fd_x", "fd_y", "fd_z"];
pub const LOG_HEADER: [&str; 22] = [
    "t", "drone_id", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz", "m1", "m2", "m3",
    "m4", "fdx", "fdy", "fdz",
];

fn csv_err(e: csv::Error) -> DataError {
    DataError::Csv(e.to_string())
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), DataError> {
    let header = rdr.headers().map_err(csv_err)?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(DataError::Csv(format!("expected header `{}`, found `{}`", expected.join(","), header.iter().collect::<Vec<_>>().join(","))));
    }
    Ok(())
}

fn parse_num(field: &str, line: usize) -> Result<f64, DataError> {
    let v: f64 = field.parse().map_err(|_| DataError::Csv(format!("row {line}: bad number `{field}`")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DataError::Csv(format!("row {line}: non-finite value")))
    }
}

fn check_width(rec: &csv::StringRecord, width: usize, line: usize) -> Result<(), DataError> {
    if rec.len() != width {
        return Err(DataError::Csv(format!("row {line}: {} fields, expected {width}", rec.len())));
    }
    Ok(())
}

pub fn write_dataset<W: Write>(samples: &[Sample], out: W) -> Result<(), DataError> {
    let mut w = writer(out);
    w.write_record(DATASET_HEADER).map_err(csv_err)?;
    for s in samples {
        let row = [s.rel_p, s.rel_v, s.f_d].iter().flat_map(|v| v.iter().map(|&x| num(x)).collect::<Vec<_>>()).collect::<Vec<_>>();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_dataset<R: Read>(input: R) -> Result<Vec<Sample>, DataError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &DATASET_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        check_width(&rec, DATASET_HEADER.len(), i + 2)?;
        let v = rec.iter().map(|f| parse_num(f, i + 2)).collect::<Result<Vec<_>, _>>()?;
        out.push(Sample {
            rel_p: Vector3::new(v[0], v[1], v[2]),
            rel_v: Vector3::new(v[3], v[4], v[5]),
            f_d: Vector3::new(v[6], v[7], v[8]),
        });
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<Sample>, DataError> {
    parse_dataset(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_log<W: Write>(records: &[LogRecord], out: W) -> Result<(), DataError> {
    let mut w = writer(out);
    w.write_record(LOG_HEADER).map_err(csv_err)?;
    for r in records {
        let mut row = vec![format!("{:.6}", r.t), r.drone_id.to_string()];
        row.extend(r.p.iter().chain(r.v.iter()).map(|&x| num(x)));
        row.extend(r.q.as_vector().iter().map(|&x| num(x)));
        row.extend(r.w.iter().map(|&x| num(x)));
        row.extend(r.motors.0.iter().map(|&x| num(x)));
        row.extend(r.f_true.iter().map(|&x| num(x)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_log<R: Read>(input: R) -> Result<Vec<LogRecord>, DataError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &LOG_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        check_width(&rec, LOG_HEADER.len(), line)?;
        let id_field = &rec[1];
        let drone_id: u32 = id_field.parse().map_err(|_| DataError::Csv(format!("row {line}: bad drone id `{id_field}`")))?;
        let mut v = [0.0; LOG_HEADER.len()];
        for (j, f) in rec.iter().enumerate() {
            if j != 1 {
                v[j] = parse_num(f, line)?;
            }
        }
        out.push(LogRecord {
            t: v[0],
            drone_id,
            p: Vector3::new(v[2], v[3], v[4]),
            v: Vector3::new(v[5], v[6], v[7]),
            q: Quat::new(v[8], v[9], v[10], v[11]),
            w: Vector3::new(v[12], v[13], v[14]),
            motors: MotorSpeeds([v[15], v[16], v[17], v[18]]),
            f_true: Vector3::new(v[19], v[20], v[21]),
        });
    }
    Ok(out)
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, DataError> {
    parse_log(std::io::BufReader::new(std::fs::File::open(path)?))
}
