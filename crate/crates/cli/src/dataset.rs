//! Line-oriented dataset files, format `v1`.
//!
//! ```text
//! acpose-dataset v1
//! image_size 640 480
//! principal_point 320 240
//! focal 512.25                      # optional, ground truth
//! imu_i 1.5 -3.25                   # roll pitch in degrees, as measured
//! imu_j 0.5 2
//! imu_i_true 1.5 -3.25              # optional
//! imu_j_true 0.5 2                  # optional
//! gt_rotation r11 r12 ... r33       # optional, row-major
//! gt_translation tx ty tz           # optional
//! ac u_i v_i u_j v_j a11 a12 a21 a22 [inlier=0|1]
//! ```
//!
//! Blank lines and `#` comments are ignored. The header must come first and
//! each key may appear once. Numbers are written in shortest round-trip form,
//! so parsing a serialized dataset gives back the same values.

use std::fmt::Write as _;

use acpose_core::{AffineCorrespondence, ImuAttitude, Matrix2, Matrix3, Pose, Vector2, Vector3};

use crate::CliError;

pub const MAGIC: &str = "acpose-dataset";
pub const VERSION: &str = "v1";

/// Roll and pitch in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeDeg {
    pub roll: f64,
    pub pitch: f64,
}

impl AttitudeDeg {
    pub fn to_radians(self) -> ImuAttitude {
        ImuAttitude::from_degrees(self.roll, self.pitch)
    }

    pub fn from_attitude(att: ImuAttitude) -> Self {
        Self {
            roll: att.roll.to_degrees(),
            pitch: att.pitch.to_degrees(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub ac: AffineCorrespondence,
    pub inlier: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub image_size: (f64, f64),
    pub principal_point: Vector2<f64>,
    pub focal_px: Option<f64>,
    pub imu_i: AttitudeDeg,
    pub imu_j: AttitudeDeg,
    pub imu_i_true: Option<AttitudeDeg>,
    pub imu_j_true: Option<AttitudeDeg>,
    pub gt_pose: Option<Pose>,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn correspondences(&self) -> Vec<AffineCorrespondence> {
        self.records.iter().map(|r| r.ac).collect()
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut line = |key: &str, vals: &[f64]| {
            out.push_str(key);
            for v in vals {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        };
        line(&format!("{MAGIC} {VERSION}"), &[]);
        line("image_size", &[self.image_size.0, self.image_size.1]);
        line("principal_point", &[self.principal_point.x, self.principal_point.y]);
        if let Some(f) = self.focal_px {
            line("focal", &[f]);
        }
        line("imu_i", &[self.imu_i.roll, self.imu_i.pitch]);
        line("imu_j", &[self.imu_j.roll, self.imu_j.pitch]);
        if let Some(a) = self.imu_i_true {
            line("imu_i_true", &[a.roll, a.pitch]);
        }
        if let Some(a) = self.imu_j_true {
            line("imu_j_true", &[a.roll, a.pitch]);
        }
        if let Some(p) = &self.gt_pose {
            let r: Vec<f64> = p.rotation.transpose().iter().copied().collect();
            line("gt_rotation", &r);
            line("gt_translation", p.translation.as_slice());
        }
        for rec in &self.records {
            let ac = &rec.ac;
            write!(
                out,
                "ac {} {} {} {} {} {} {} {}",
                ac.x_i.x, ac.x_i.y, ac.x_j.x, ac.x_j.y, ac.a[(0, 0)], ac.a[(0, 1)], ac.a[(1, 0)], ac.a[(1, 1)]
            )
            .unwrap();
            if let Some(flag) = rec.inlier {
                write!(out, " inlier={}", u8::from(flag)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (first, magic) = lines.next().ok_or_else(|| parse_err(1, "empty dataset"))?;
        match magic.split_whitespace().collect::<Vec<_>>()[..] {
            [MAGIC, VERSION] => {}
            [MAGIC, v] => return Err(parse_err(first, format!("unsupported version '{v}'"))),
            _ => return Err(parse_err(first, format!("expected '{MAGIC} {VERSION}'"))),
        }

        let mut image_size = None;
        let mut principal_point = None;
        let mut focal_px = None;
        let mut imu_i = None;
        let mut imu_j = None;
        let mut imu_i_true = None;
        let mut imu_j_true = None;
        let mut gt_rotation = None;
        let mut gt_translation = None;
        let mut records = Vec::new();

        for (no, l) in lines {
            let mut fields = l.split_whitespace();
            let key = fields.next().expect("line is not empty");
            let rest: Vec<&str> = fields.collect();
            if key == "ac" {
                records.push(parse_record(no, &rest)?);
                continue;
            }
            if !records.is_empty() {
                return Err(parse_err(no, format!("header key '{key}' after correspondence records")));
            }
            let vals = |n: usize| numbers(no, key, &rest, n);
            let slot_set = |slot: &mut Option<Vec<f64>>, v: Vec<f64>| -> Result<(), CliError> {
                if slot.replace(v).is_some() {
                    return Err(parse_err(no, format!("duplicate key '{key}'")));
                }
                Ok(())
            };
            match key {
                "image_size" => slot_set(&mut image_size, vals(2)?)?,
                "principal_point" => slot_set(&mut principal_point, vals(2)?)?,
                "focal" => slot_set(&mut focal_px, vals(1)?)?,
                "imu_i" => slot_set(&mut imu_i, vals(2)?)?,
                "imu_j" => slot_set(&mut imu_j, vals(2)?)?,
                "imu_i_true" => slot_set(&mut imu_i_true, vals(2)?)?,
                "imu_j_true" => slot_set(&mut imu_j_true, vals(2)?)?,
                "gt_rotation" => slot_set(&mut gt_rotation, vals(9)?)?,
                "gt_translation" => slot_set(&mut gt_translation, vals(3)?)?,
                _ => return Err(parse_err(no, format!("unknown field '{key}'"))),
            }
        }

        let require = |v: Option<Vec<f64>>, key: &str| {
            v.ok_or_else(|| parse_err(0, format!("missing header key '{key}'")))
        };
        let att = |v: Vec<f64>| AttitudeDeg { roll: v[0], pitch: v[1] };
        let size = require(image_size, "image_size")?;
        let pp = require(principal_point, "principal_point")?;
        let gt_pose = match (gt_rotation, gt_translation) {
            (Some(r), Some(t)) => Some(Pose::new(Matrix3::from_row_slice(&r), Vector3::from_column_slice(&t))),
            (None, None) => None,
            _ => return Err(parse_err(0, "gt_rotation and gt_translation must be given together")),
        };
        Ok(Self {
            image_size: (size[0], size[1]),
            principal_point: Vector2::new(pp[0], pp[1]),
            focal_px: focal_px.map(|v| v[0]),
            imu_i: att(require(imu_i, "imu_i")?),
            imu_j: att(require(imu_j, "imu_j")?),
            imu_i_true: imu_i_true.map(att),
            imu_j_true: imu_j_true.map(att),
            gt_pose,
            records,
        })
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> CliError {
    CliError::Parse { line, message: message.into() }
}

fn number(line: usize, s: &str) -> Result<f64, CliError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(line, format!("invalid number '{s}'")))
}

fn numbers(line: usize, key: &str, fields: &[&str], n: usize) -> Result<Vec<f64>, CliError> {
    if fields.len() != n {
        return Err(parse_err(line, format!("'{key}' takes {n} values, got {}", fields.len())));
    }
    fields.iter().map(|f| number(line, f)).collect()
}

fn parse_record(line: usize, fields: &[&str]) -> Result<Record, CliError> {
    if !(8..=9).contains(&fields.len()) {
        return Err(parse_err(line, format!("'ac' takes 8 values and an optional flag, got {}", fields.len())));
    }
    let v = fields[..8]
        .iter()
        .map(|f| number(line, f))
        .collect::<Result<Vec<f64>, _>>()?;
    let inlier = match fields.get(8) {
        None => None,
        Some(&"inlier=1") => Some(true),
        Some(&"inlier=0") => Some(false),
        Some(other) => return Err(parse_err(line, format!("unknown field '{other}'"))),
    };
    Ok(Record {
        ac: AffineCorrespondence::new(
            Vector2::new(v[0], v[1]),
            Vector2::new(v[2], v[3]),
            Matrix2::new(v[4], v[5], v[6], v[7]),
        ),
        inlier,
    })
}
