//! Trajectory and schedule CSV files.
//!
//! A trajectory file has one row per knot: `N + 1` rows for `N` slots. Each
//! row carries the slot starting at that knot; the terminal row has
//! `dt_s = 0` and zero acceleration. Schedule files have one row per slot,
//! numbered from 0.

use std::io::{Read, Write};
use std::path::Path;

use crate::comms::Schedule;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::kinematics::{Grid, TrajectoryPlan};

pub const TRAJECTORY_HEADER: [&str; 8] = [
    "t_s", "dt_s", "qx_m", "qy_m", "vx_mps", "vy_mps", "ax_mps2", "ay_mps2",
];

fn csv_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_trajectory_to<W: Write>(plan: &TrajectoryPlan, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for n in 0..=plan.len() {
        let (dt, a) = if n < plan.len() {
            (plan.grid.dt(n), plan.a[n])
        } else {
            (0.0, Vec2::ZERO)
        };
        let (q, v) = (plan.q[n], plan.v[n]);
        let t = plan.grid.knot_time(n);
        w.write_record(
            [t, dt, q.x, q.y, v.x, v.y, a.x, a.y]
                .iter()
                .map(|x| x.to_string()),
        )?;
    }
    w.flush()
}

pub fn write_trajectory(path: impl AsRef<Path>, plan: &TrajectoryPlan) -> Result<()> {
    let f = std::fs::File::create(path.as_ref())?;
    write_trajectory_to(plan, std::io::BufWriter::new(f))?;
    Ok(())
}

fn parse_field(path: &Path, row: usize, column: &str, text: &str) -> Result<f64> {
    let x: f64 = text
        .trim()
        .parse()
        .map_err(|_| csv_err(path, format!("row {row}, column `{column}`: not a number: {text:?}")))?;
    if !x.is_finite() {
        return Err(csv_err(path, format!("row {row}, column `{column}`: not finite")));
    }
    Ok(x)
}

pub fn read_trajectory_from<R: Read>(input: R, origin: &Path) -> Result<TrajectoryPlan> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers().map_err(|e| csv_err(origin, e.to_string()))?.clone();
    for (i, name) in TRAJECTORY_HEADER.iter().enumerate() {
        match header.get(i) {
            Some(h) if h == *name => {}
            Some(h) => {
                return Err(csv_err(origin, format!("column {i} is `{h}`, expected `{name}`")));
            }
            None => return Err(csv_err(origin, format!("missing column `{name}`"))),
        }
    }
    let mut rows: Vec<[f64; 8]> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(origin, e.to_string()))?;
        let mut row = [0.0; 8];
        for (j, name) in TRAJECTORY_HEADER.iter().enumerate() {
            let text = rec
                .get(j)
                .ok_or_else(|| csv_err(origin, format!("row {}, missing column `{name}`", i + 1)))?;
            row[j] = parse_field(origin, i + 1, name, text)?;
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(csv_err(origin, "a trajectory needs at least two knots"));
    }
    let n = rows.len() - 1;
    let durations: Vec<f64> = rows[..n].iter().map(|r| r[1]).collect();
    let grid = Grid::from_durations(rows[0][0], &durations)
        .map_err(|e| csv_err(origin, format!("column `dt_s`: {e}")))?;
    Ok(TrajectoryPlan {
        q: rows.iter().map(|r| Vec2::new(r[2], r[3])).collect(),
        v: rows.iter().map(|r| Vec2::new(r[4], r[5])).collect(),
        a: rows[..n].iter().map(|r| Vec2::new(r[6], r[7])).collect(),
        grid,
    })
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<TrajectoryPlan> {
    let path = path.as_ref();
    let f = std::fs::File::open(path)?;
    read_trajectory_from(f, path)
}

pub fn write_schedule_to<W: Write>(schedule: &Schedule, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["slot".to_string()];
    header.extend((1..=schedule.nodes()).map(|l| format!("rho_{l}")));
    w.write_record(&header)?;
    for (n, row) in schedule.rho.iter().enumerate() {
        let mut rec = vec![n.to_string()];
        rec.extend(row.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()
}

pub fn write_schedule(path: impl AsRef<Path>, schedule: &Schedule) -> Result<()> {
    let f = std::fs::File::create(path.as_ref())?;
    write_schedule_to(schedule, std::io::BufWriter::new(f))?;
    Ok(())
}

pub fn read_schedule_from<R: Read>(input: R, origin: &Path) -> Result<Schedule> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers().map_err(|e| csv_err(origin, e.to_string()))?.clone();
    if header.get(0) != Some("slot") {
        return Err(csv_err(origin, "first column must be `slot`"));
    }
    let nodes = header.len() - 1;
    for l in 1..=nodes {
        let want = format!("rho_{l}");
        if header.get(l) != Some(want.as_str()) {
            return Err(csv_err(origin, format!("column {l} must be `{want}`")));
        }
    }
    let mut rho = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(origin, e.to_string()))?;
        let slot = parse_field(origin, i + 1, "slot", rec.get(0).unwrap_or(""))?;
        if slot != i as f64 {
            return Err(csv_err(origin, format!("row {}: slot {slot} out of order", i + 1)));
        }
        let row = (1..=nodes)
            .map(|l| parse_field(origin, i + 1, &format!("rho_{l}"), rec.get(l).unwrap_or("")))
            .collect::<Result<Vec<f64>>>()?;
        rho.push(row);
    }
    Ok(Schedule { rho })
}

pub fn read_schedule(path: impl AsRef<Path>) -> Result<Schedule> {
    let path = path.as_ref();
    let f = std::fs::File::open(path)?;
    read_schedule_from(f, path)
}
