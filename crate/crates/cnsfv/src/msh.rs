//! Gmsh MSH 2.2 ASCII import and export of tetrahedral meshes.

use std::collections::HashMap;
use std::fmt::Write as _;

use cnsfv_core::{Mesh, MeshError, Vec3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("the file contains no tetrahedra")]
    NoTetrahedra,
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

const TETRAHEDRON: u32 = 4;

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<&'a str> {
        loop {
            let (i, l) = self.inner.next()?;
            self.line = i + 1;
            let l = l.trim();
            if !l.is_empty() {
                return Some(l);
            }
        }
    }

    fn expect(&mut self, what: &str) -> Result<&'a str, MshError> {
        self.next().ok_or_else(|| MshError::Parse {
            line: self.line,
            message: format!("unexpected end of file, expected {what}"),
        })
    }

    fn err(&self, message: impl Into<String>) -> MshError {
        MshError::Parse {
            line: self.line,
            message: message.into(),
        }
    }
}

fn field<T: std::str::FromStr>(lines: &Lines, tok: Option<&str>, what: &str) -> Result<T, MshError> {
    let tok = tok.ok_or_else(|| lines.err(format!("missing {what}")))?;
    tok.parse().map_err(|_| lines.err(format!("invalid {what} `{tok}`")))
}

pub fn read_msh(text: &str) -> Result<Mesh, MshError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let mut nodes: Vec<Vec3> = Vec::new();
    let mut node_index: HashMap<u64, usize> = HashMap::new();
    let mut tets: Vec<[u64; 4]> = Vec::new();
    let mut tet_lines: Vec<usize> = Vec::new();
    let mut saw_format = false;

    while let Some(l) = lines.next() {
        match l {
            "$MeshFormat" => {
                let header = lines.expect("format header")?;
                let mut it = header.split_whitespace();
                let version: String = field(&lines, it.next(), "version")?;
                let file_type: u32 = field(&lines, it.next(), "file type")?;
                if !version.starts_with("2.") {
                    return Err(lines.err(format!("unsupported MSH version {version}, expected 2.2")));
                }
                if file_type != 0 {
                    return Err(lines.err("binary MSH files are not supported"));
                }
                if lines.expect("$EndMeshFormat")? != "$EndMeshFormat" {
                    return Err(lines.err("expected $EndMeshFormat"));
                }
                saw_format = true;
            }
            "$Nodes" => {
                let tok = lines.expect("node count")?;
                let count: usize = field(&lines, Some(tok), "node count")?;
                for _ in 0..count {
                    let l = lines.expect("node")?;
                    let mut it = l.split_whitespace();
                    let id: u64 = field(&lines, it.next(), "node id")?;
                    let x: f64 = field(&lines, it.next(), "x coordinate")?;
                    let y: f64 = field(&lines, it.next(), "y coordinate")?;
                    let z: f64 = field(&lines, it.next(), "z coordinate")?;
                    if node_index.insert(id, nodes.len()).is_some() {
                        return Err(lines.err(format!("duplicate node id {id}")));
                    }
                    nodes.push(Vec3::new(x, y, z));
                }
                if lines.expect("$EndNodes")? != "$EndNodes" {
                    return Err(lines.err("expected $EndNodes"));
                }
            }
            "$Elements" => {
                let tok = lines.expect("element count")?;
                let count: usize = field(&lines, Some(tok), "element count")?;
                for _ in 0..count {
                    let l = lines.expect("element")?;
                    let mut it = l.split_whitespace();
                    let _id: u64 = field(&lines, it.next(), "element id")?;
                    let kind: u32 = field(&lines, it.next(), "element type")?;
                    let ntags: usize = field(&lines, it.next(), "tag count")?;
                    for _ in 0..ntags {
                        let _: i64 = field(&lines, it.next(), "tag")?;
                    }
                    if kind == TETRAHEDRON {
                        let mut v = [0u64; 4];
                        for slot in &mut v {
                            *slot = field(&lines, it.next(), "node reference")?;
                        }
                        tets.push(v);
                        tet_lines.push(lines.line);
                    }
                }
                if lines.expect("$EndElements")? != "$EndElements" {
                    return Err(lines.err("expected $EndElements"));
                }
            }
            s if s.starts_with('$') && !s.starts_with("$End") => {
                let end = format!("$End{}", &s[1..]);
                loop {
                    if lines.expect(&end)? == end {
                        break;
                    }
                }
            }
            other => return Err(lines.err(format!("unexpected content `{other}`"))),
        }
    }
    if !saw_format {
        return Err(MshError::Parse {
            line: 1,
            message: "missing $MeshFormat section".into(),
        });
    }
    if tets.is_empty() {
        return Err(MshError::NoTetrahedra);
    }
    let cells = tets
        .iter()
        .zip(&tet_lines)
        .map(|(t, &line)| {
            let mut c = [0usize; 4];
            for (slot, id) in c.iter_mut().zip(t) {
                *slot = *node_index.get(id).ok_or(MshError::Parse {
                    line,
                    message: format!("unknown node id {id}"),
                })?;
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>, MshError>>()?;
    Ok(Mesh::from_cells(nodes, cells)?)
}

pub fn write_msh(mesh: &Mesh) -> String {
    let mut s = String::from("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    writeln!(s, "{}", mesh.vertices().len()).unwrap();
    for (i, v) in mesh.vertices().iter().enumerate() {
        writeln!(s, "{} {:e} {:e} {:e}", i + 1, v.x, v.y, v.z).unwrap();
    }
    s.push_str("$EndNodes\n$Elements\n");
    writeln!(s, "{}", mesh.num_cells()).unwrap();
    for (i, c) in mesh.cells().iter().enumerate() {
        writeln!(s, "{} 4 2 1 1 {} {} {} {}", i + 1, c[0] + 1, c[1] + 1, c[2] + 1, c[3] + 1).unwrap();
    }
    s.push_str("$EndElements\n");
    s
}
