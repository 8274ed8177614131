//! ASCII VTK XML UnstructuredGrid (`.vtu`) output.
//!
//! Numbers are printed in Rust's shortest round-trip form, so reading a file
//! written here and writing it again reproduces it byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use super::{MeshError, Point, TriMesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Point,
    Cell,
}

#[derive(Clone, Copy, Debug)]
pub enum FieldValues<'a> {
    Scalar(&'a [f64]),
    Vector(&'a [Point]),
}

#[derive(Clone, Copy, Debug)]
pub struct FieldRef<'a> {
    pub name: &'a str,
    pub location: Location,
    pub values: FieldValues<'a>,
}

impl<'a> FieldRef<'a> {
    pub fn point_scalar(name: &'a str, values: &'a [f64]) -> Self {
        FieldRef {
            name,
            location: Location::Point,
            values: FieldValues::Scalar(values),
        }
    }

    pub fn point_vector(name: &'a str, values: &'a [Point]) -> Self {
        FieldRef {
            name,
            location: Location::Point,
            values: FieldValues::Vector(values),
        }
    }

    pub fn cell_scalar(name: &'a str, values: &'a [f64]) -> Self {
        FieldRef {
            name,
            location: Location::Cell,
            values: FieldValues::Scalar(values),
        }
    }

    fn len(&self) -> usize {
        match self.values {
            FieldValues::Scalar(v) => v.len(),
            FieldValues::Vector(v) => v.len(),
        }
    }
}

/// Owned contents of a VTU file as written by this module.
#[derive(Clone, Debug, PartialEq)]
pub struct VtuData {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<[usize; 3]>,
    pub point_data: Vec<DataArray>,
    pub cell_data: Vec<DataArray>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataArray {
    pub name: String,
    pub components: usize,
    pub values: Vec<f64>,
}

impl VtuData {
    pub fn from_mesh(mesh: &TriMesh, fields: &[FieldRef<'_>]) -> Result<Self, MeshError> {
        let mut point_data = Vec::new();
        let mut cell_data = Vec::new();
        for f in fields {
            let expected = match f.location {
                Location::Point => mesh.num_vertices(),
                Location::Cell => mesh.num_triangles(),
            };
            if f.len() != expected {
                return Err(MeshError::Io(format!(
                    "field '{}' has {} entries, expected {expected}",
                    f.name,
                    f.len()
                )));
            }
            let array = match f.values {
                FieldValues::Scalar(v) => DataArray {
                    name: f.name.to_string(),
                    components: 1,
                    values: v.to_vec(),
                },
                FieldValues::Vector(v) => DataArray {
                    name: f.name.to_string(),
                    components: 3,
                    values: v.iter().flat_map(|p| [p[0], p[1], 0.0]).collect(),
                },
            };
            match f.location {
                Location::Point => point_data.push(array),
                Location::Cell => cell_data.push(array),
            }
        }
        Ok(VtuData {
            points: mesh.vertices().iter().map(|p| [p[0], p[1], 0.0]).collect(),
            cells: mesh.triangles().to_vec(),
            point_data,
            cell_data,
        })
    }

    pub fn to_xml(&self) -> String {
        let mut s = String::new();
        s.push_str("<?xml version=\"1.0\"?>\n");
        s.push_str(
            "<VTKFile type=\"UnstructuredGrid\" version=\"0.1\" byte_order=\"LittleEndian\">\n",
        );
        s.push_str("  <UnstructuredGrid>\n");
        let _ = writeln!(
            s,
            "    <Piece NumberOfPoints=\"{}\" NumberOfCells=\"{}\">",
            self.points.len(),
            self.cells.len()
        );
        write_section(&mut s, "PointData", &self.point_data);
        write_section(&mut s, "CellData", &self.cell_data);
        s.push_str("      <Points>\n");
        write_floats(
            &mut s,
            "Points",
            3,
            self.points.iter().flat_map(|p| p.iter().copied()),
        );
        s.push_str("      </Points>\n");
        s.push_str("      <Cells>\n");
        s.push_str("        <DataArray type=\"Int64\" Name=\"connectivity\" format=\"ascii\">\n");
        for c in &self.cells {
            let _ = writeln!(s, "          {} {} {}", c[0], c[1], c[2]);
        }
        s.push_str("        </DataArray>\n");
        s.push_str("        <DataArray type=\"Int64\" Name=\"offsets\" format=\"ascii\">\n");
        for i in 0..self.cells.len() {
            let _ = writeln!(s, "          {}", 3 * (i + 1));
        }
        s.push_str("        </DataArray>\n");
        s.push_str("        <DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n");
        for _ in &self.cells {
            s.push_str("          5\n");
        }
        s.push_str("        </DataArray>\n");
        s.push_str("      </Cells>\n");
        s.push_str("    </Piece>\n  </UnstructuredGrid>\n</VTKFile>\n");
        s
    }

    /// Parses files produced by [`VtuData::to_xml`].
    pub fn parse(text: &str) -> Result<Self, MeshError> {
        let mut points = Vec::new();
        let mut cells = Vec::new();
        let mut point_data = Vec::new();
        let mut cell_data = Vec::new();
        let mut section = "";
        let mut lines = text.lines().enumerate();
        while let Some((i, raw)) = lines.next() {
            let line = raw.trim();
            if line.starts_with("<PointData") {
                section = "point";
            } else if line.starts_with("<CellData") {
                section = "cell";
            } else if line.starts_with("<Points") {
                section = "points";
            } else if line.starts_with("<Cells") {
                section = "cells";
            } else if line.starts_with("<DataArray") {
                let name = attr(line, "Name").unwrap_or_default();
                let components: usize = attr(line, "NumberOfComponents")
                    .and_then(|c| c.parse().ok())
                    .unwrap_or(1);
                let mut values = Vec::new();
                for (j, body) in lines.by_ref() {
                    let body = body.trim();
                    if body.starts_with("</DataArray") {
                        break;
                    }
                    for tok in body.split_whitespace() {
                        values.push(tok.parse::<f64>().map_err(|_| MeshError::Parse {
                            line: j + 1,
                            message: format!("invalid number '{tok}'"),
                        })?);
                    }
                }
                match (section, name.as_str()) {
                    ("points", _) => {
                        points = values.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
                    }
                    ("cells", "connectivity") => {
                        cells = values
                            .chunks(3)
                            .map(|c| [c[0] as usize, c[1] as usize, c[2] as usize])
                            .collect()
                    }
                    ("cells", _) => {}
                    ("point", _) | ("cell", _) => {
                        let array = DataArray {
                            name,
                            components,
                            values,
                        };
                        if section == "point" {
                            point_data.push(array)
                        } else {
                            cell_data.push(array)
                        }
                    }
                    _ => {
                        return Err(MeshError::Parse {
                            line: i + 1,
                            message: "DataArray outside of a known section".into(),
                        })
                    }
                }
            }
        }
        Ok(VtuData {
            points,
            cells,
            point_data,
            cell_data,
        })
    }
}

fn attr(line: &str, key: &str) -> Option<String> {
    let pat = format!("{key}=\"");
    let start = line.find(&pat)? + pat.len();
    let end = line[start..].find('"')? + start;
    Some(line[start..end].to_string())
}

fn write_section(s: &mut String, tag: &str, arrays: &[DataArray]) {
    if arrays.is_empty() {
        return;
    }
    let _ = writeln!(s, "      <{tag}>");
    for a in arrays {
        write_floats(s, &a.name, a.components, a.values.iter().copied());
    }
    let _ = writeln!(s, "      </{tag}>");
}

fn write_floats(s: &mut String, name: &str, components: usize, values: impl Iterator<Item = f64>) {
    let _ = writeln!(
        s,
        "        <DataArray type=\"Float64\" Name=\"{name}\" NumberOfComponents=\"{components}\" format=\"ascii\">"
    );
    let values: Vec<f64> = values.collect();
    for chunk in values.chunks(components.max(1)) {
        s.push_str("          ");
        for (k, v) in chunk.iter().enumerate() {
            if k > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s.push_str("        </DataArray>\n");
}

pub fn write_vtu(
    mesh: &TriMesh,
    fields: &[FieldRef<'_>],
    path: impl AsRef<Path>,
) -> Result<(), MeshError> {
    let data = VtuData::from_mesh(mesh, fields)?;
    std::fs::write(path.as_ref(), data.to_xml())
        .map_err(|e| MeshError::Io(format!("{}: {e}", path.as_ref().display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryMarker;

    fn triangle() -> TriMesh {
        let marks = [
            ([0, 1], BoundaryMarker::Wall),
            ([1, 2], BoundaryMarker::Wall),
            ([2, 0], BoundaryMarker::Wall),
        ];
        TriMesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            &marks,
        )
        .unwrap()
    }

    #[test]
    fn minimal_file() {
        let xml = VtuData::from_mesh(&triangle(), &[]).unwrap().to_xml();
        assert!(xml.contains("NumberOfPoints=\"3\" NumberOfCells=\"1\""));
        assert!(!xml.contains("<PointData>"));
    }

    #[test]
    fn one_point_array() {
        let speed = [0.0, 0.5, 1.0 / 3.0];
        let xml = VtuData::from_mesh(&triangle(), &[FieldRef::point_scalar("speed", &speed)])
            .unwrap()
            .to_xml();
        assert_eq!(xml.matches("<PointData>").count(), 1);
        assert!(xml.contains("Name=\"speed\""));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let bad = [1.0, 2.0];
        assert!(VtuData::from_mesh(&triangle(), &[FieldRef::point_scalar("x", &bad)]).is_err());
    }

    #[test]
    fn reread_and_rewrite_is_byte_identical() {
        let mesh = triangle();
        let u = [[0.1, -0.2], [1e-17, 3.5e8], [0.0, -0.0]];
        let q = [std::f64::consts::PI];
        let first = VtuData::from_mesh(
            &mesh,
            &[
                FieldRef::point_vector("u", &u),
                FieldRef::cell_scalar("quality", &q),
            ],
        )
        .unwrap()
        .to_xml();
        let second = VtuData::parse(&first).unwrap().to_xml();
        assert_eq!(first, second);
    }
}
