//! Plain-text discrete states, used for file-defined initial data.
//!
//! ```text
//! cells 48
//! 1.0
//! ...
//! faces 120
//! 0 0 0
//! ...
//! ```
//!
//! One density per cell, then one velocity per face in mesh face order.
//! Boundary faces must carry zero velocity. `#` starts a comment.

use std::fmt::Write as _;

use cnsfv_core::{CellField, CrField, Mesh, StepState, Vec3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct StateError {
    pub line: usize,
    pub message: String,
}

pub fn write_state(mesh: &Mesh, state: &StepState) -> String {
    let mut s = String::new();
    writeln!(s, "cells {}", mesh.num_cells()).unwrap();
    for r in &state.rho.values {
        writeln!(s, "{r:e}").unwrap();
    }
    writeln!(s, "faces {}", mesh.num_faces()).unwrap();
    for v in &state.u.values {
        writeln!(s, "{:e} {:e} {:e}", v.x, v.y, v.z).unwrap();
    }
    s
}

pub fn read_state(mesh: &Mesh, text: &str) -> Result<StepState, StateError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap().trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut last = 0;
    let mut next = |what: &str| {
        let item = lines.next();
        if let Some((i, _)) = item {
            last = i;
        }
        item.ok_or_else(|| StateError {
            line: last,
            message: format!("unexpected end of file, expected {what}"),
        })
    };
    let err = |line: usize, message: String| StateError { line, message };
    let number = |line: usize, tok: &str| tok.parse::<f64>().map_err(|_| err(line, format!("invalid number `{tok}`")));
    let header = |line: usize, l: &str, key: &str, expected: usize| -> Result<(), StateError> {
        match l.split_whitespace().collect::<Vec<_>>()[..] {
            [k, n] if k == key && n.parse() == Ok(expected) => Ok(()),
            [k, n] if k == key => Err(err(line, format!("mesh has {expected} {key}, file declares {n}"))),
            _ => Err(err(line, format!("expected `{key} {expected}`"))),
        }
    };

    let (line, l) = next("cells header")?;
    header(line, l, "cells", mesh.num_cells())?;
    let mut rho = Vec::with_capacity(mesh.num_cells());
    for _ in 0..mesh.num_cells() {
        let (line, l) = next("a density")?;
        let r = number(line, l)?;
        if !(r > 0.0 && r.is_finite()) {
            return Err(err(line, format!("density must be positive, got {r}")));
        }
        rho.push(r);
    }
    let (line, l) = next("faces header")?;
    header(line, l, "faces", mesh.num_faces())?;
    let mut u = CrField::zeros(mesh, true);
    for f in 0..mesh.num_faces() {
        let (line, l) = next("a velocity")?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(err(line, format!("expected three velocity components, got {}", toks.len())));
        }
        let v = Vec3::new(number(line, toks[0])?, number(line, toks[1])?, number(line, toks[2])?);
        if mesh.face(f).is_boundary() && v.norm() > 0.0 {
            return Err(err(line, format!("boundary face {f} must have zero velocity")));
        }
        u.values[f] = v;
    }
    if let Ok((line, _)) = next("") {
        return Err(err(line, "trailing content after the face velocities".into()));
    }
    Ok(StepState::new(mesh, CellField { values: rho }, u))
}
