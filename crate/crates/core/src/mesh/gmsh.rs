//! Gmsh MSH reader (ASCII 2.2 and 4.1) and MSH 2.2 writer.
//!
//! Only 2D linear triangles (element type 2) and boundary lines (type 1) are
//! used; points and other zero-dimensional entities are skipped.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoundaryMarker, MeshError, Point, TriMesh};

/// Physical-group tags assigned to each boundary marker.
///
/// Physical groups whose name equals a marker name (`inflow`, `outflow`,
/// `wall`, `obstacle`, case-insensitive) are mapped even when their tag is
/// not listed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkerMap {
    pub inflow: Vec<i64>,
    pub outflow: Vec<i64>,
    pub wall: Vec<i64>,
    pub obstacle: Vec<i64>,
}

impl Default for MarkerMap {
    /// Tags 1-4 in marker order, as written by [`write_msh22`].
    fn default() -> Self {
        MarkerMap {
            inflow: vec![1],
            outflow: vec![2],
            wall: vec![3],
            obstacle: vec![4],
        }
    }
}

impl MarkerMap {
    fn lookup(&self, tag: i64, names: &HashMap<i64, String>) -> Option<BoundaryMarker> {
        let lists = [
            (&self.inflow, BoundaryMarker::Inflow),
            (&self.outflow, BoundaryMarker::Outflow),
            (&self.wall, BoundaryMarker::Wall),
            (&self.obstacle, BoundaryMarker::Obstacle),
        ];
        if let Some(&(_, m)) = lists.iter().find(|(tags, _)| tags.contains(&tag)) {
            return Some(m);
        }
        let name = names.get(&tag)?.to_ascii_lowercase();
        BoundaryMarker::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn tag_of(&self, marker: BoundaryMarker) -> Option<i64> {
        match marker {
            BoundaryMarker::Inflow => self.inflow.first(),
            BoundaryMarker::Outflow => self.outflow.first(),
            BoundaryMarker::Wall => self.wall.first(),
            BoundaryMarker::Obstacle => self.obstacle.first(),
        }
        .copied()
    }
}

pub fn load_gmsh(path: impl AsRef<Path>, markers: &MarkerMap) -> Result<TriMesh, MeshError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| MeshError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_gmsh(&text, markers)
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    end_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(lines: &[(usize, &'a str)]) -> Self {
        let items = lines
            .iter()
            .flat_map(|&(n, l)| l.split_whitespace().map(move |t| (n, t)))
            .collect();
        let end_line = lines.last().map_or(0, |l| l.0);
        Tokens {
            items,
            pos: 0,
            end_line,
        }
    }

    fn next_str(&mut self) -> Result<(usize, &'a str), MeshError> {
        let item = self.items.get(self.pos).copied().ok_or(MeshError::Parse {
            line: self.end_line,
            message: "unexpected end of section".into(),
        })?;
        self.pos += 1;
        Ok(item)
    }

    fn next<T: std::str::FromStr>(&mut self) -> Result<T, MeshError> {
        let (line, tok) = self.next_str()?;
        tok.parse().map_err(|_| MeshError::Parse {
            line,
            message: format!("invalid number '{tok}'"),
        })
    }

    fn line(&self) -> usize {
        self.items.get(self.pos).map_or(self.end_line, |i| i.0)
    }
}

type Section<'a> = Vec<(usize, &'a str)>;

fn sections(text: &str) -> Result<HashMap<String, Section<'_>>, MeshError> {
    let mut out = HashMap::new();
    let mut current: Option<(String, Section<'_>)> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let n = i + 1;
        if let Some(name) = line.strip_prefix("$End") {
            match current.take() {
                Some((open, body)) if open == name => {
                    out.insert(open, body);
                }
                _ => {
                    return Err(MeshError::Parse {
                        line: n,
                        message: format!("unmatched $End{name}"),
                    })
                }
            }
        } else if let Some(name) = line.strip_prefix('$') {
            if current.is_some() {
                return Err(MeshError::Parse {
                    line: n,
                    message: format!("section ${name} opened inside another section"),
                });
            }
            current = Some((name.to_string(), Vec::new()));
        } else if let Some((_, body)) = current.as_mut() {
            if !line.is_empty() {
                body.push((n, line));
            }
        }
    }
    if let Some((name, _)) = current {
        return Err(MeshError::Parse {
            line: text.lines().count(),
            message: format!("section ${name} is not closed"),
        });
    }
    Ok(out)
}

fn physical_names(section: Option<&Section<'_>>) -> Result<HashMap<i64, String>, MeshError> {
    let mut names = HashMap::new();
    let Some(lines) = section else {
        return Ok(names);
    };
    for &(n, line) in lines.iter().skip(1) {
        let mut parts = line.splitn(3, char::is_whitespace);
        let _dim = parts.next();
        let tag: i64 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or(MeshError::Parse {
                line: n,
                message: "invalid physical name entry".into(),
            })?;
        let name = parts
            .next()
            .unwrap_or("")
            .trim()
            .trim_matches('"')
            .to_string();
        names.insert(tag, name);
    }
    Ok(names)
}

struct RawMesh {
    nodes: HashMap<u64, Point>,
    triangles: Vec<[u64; 3]>,
    lines: Vec<([u64; 2], i64)>,
}

/// Parses the text of an ASCII MSH 2.2 or 4.1 file.
pub fn parse_gmsh(text: &str, markers: &MarkerMap) -> Result<TriMesh, MeshError> {
    let secs = sections(text)?;
    let format = secs.get("MeshFormat").ok_or(MeshError::Parse {
        line: 1,
        message: "missing $MeshFormat".into(),
    })?;
    let &(fline, header) = format.first().ok_or(MeshError::Parse {
        line: 1,
        message: "empty $MeshFormat".into(),
    })?;
    let mut head = header.split_whitespace();
    let version = head.next().unwrap_or("");
    let file_type = head.next().unwrap_or("");
    if file_type != "0" {
        return Err(MeshError::Parse {
            line: fline,
            message: "binary MSH files are not supported".into(),
        });
    }
    let names = physical_names(secs.get("PhysicalNames"))?;
    let raw = match version {
        v if v.starts_with("2.") => parse_v2(&secs)?,
        v if v.starts_with("4.") => parse_v4(&secs)?,
        v => {
            return Err(MeshError::Parse {
                line: fline,
                message: format!("unsupported MSH version {v}"),
            })
        }
    };
    build(raw, markers, &names)
}

fn section<'a, 's>(
    secs: &'s HashMap<String, Section<'a>>,
    name: &str,
) -> Result<&'s Section<'a>, MeshError> {
    secs.get(name).ok_or(MeshError::Parse {
        line: 0,
        message: format!("missing ${name}"),
    })
}

fn parse_v2(secs: &HashMap<String, Section<'_>>) -> Result<RawMesh, MeshError> {
    let mut t = Tokens::new(section(secs, "Nodes")?);
    let count: usize = t.next()?;
    let mut nodes = HashMap::with_capacity(count);
    for _ in 0..count {
        let id: u64 = t.next()?;
        let x: f64 = t.next()?;
        let y: f64 = t.next()?;
        let _z: f64 = t.next()?;
        nodes.insert(id, [x, y]);
    }

    let mut t = Tokens::new(section(secs, "Elements")?);
    let count: usize = t.next()?;
    let mut triangles = Vec::new();
    let mut lines = Vec::new();
    for _ in 0..count {
        let line = t.line();
        let _id: u64 = t.next()?;
        let kind: u32 = t.next()?;
        let ntags: usize = t.next()?;
        let mut tags = Vec::with_capacity(ntags);
        for _ in 0..ntags {
            tags.push(t.next::<i64>()?);
        }
        let physical = tags.first().copied().unwrap_or(0);
        match kind {
            1 => lines.push(([t.next()?, t.next()?], physical)),
            2 => triangles.push([t.next()?, t.next()?, t.next()?]),
            15 => {
                let _: u64 = t.next()?;
            }
            other => {
                return Err(MeshError::Parse {
                    line,
                    message: format!("unsupported element type {other}"),
                })
            }
        }
    }
    Ok(RawMesh {
        nodes,
        triangles,
        lines,
    })
}

fn parse_v4(secs: &HashMap<String, Section<'_>>) -> Result<RawMesh, MeshError> {
    // physical tags of curve entities
    let mut curve_physical: HashMap<i64, i64> = HashMap::new();
    if let Some(ent) = secs.get("Entities") {
        let mut t = Tokens::new(ent);
        let np: usize = t.next()?;
        let nc: usize = t.next()?;
        let _ns: usize = t.next()?;
        let _nv: usize = t.next()?;
        for _ in 0..np {
            let _tag: i64 = t.next()?;
            for _ in 0..3 {
                let _: f64 = t.next()?;
            }
            let nphys: usize = t.next()?;
            for _ in 0..nphys {
                let _: i64 = t.next()?;
            }
        }
        for _ in 0..nc {
            let tag: i64 = t.next()?;
            for _ in 0..6 {
                let _: f64 = t.next()?;
            }
            let nphys: usize = t.next()?;
            for k in 0..nphys {
                let p: i64 = t.next()?;
                if k == 0 {
                    curve_physical.insert(tag, p);
                }
            }
            let nb: usize = t.next()?;
            for _ in 0..nb {
                let _: i64 = t.next()?;
            }
        }
    }

    let mut t = Tokens::new(section(secs, "Nodes")?);
    let blocks: usize = t.next()?;
    let total: usize = t.next()?;
    let _min: u64 = t.next()?;
    let _max: u64 = t.next()?;
    let mut nodes = HashMap::with_capacity(total);
    for _ in 0..blocks {
        let dim: usize = t.next()?;
        let _entity: i64 = t.next()?;
        let parametric: u32 = t.next()?;
        let n: usize = t.next()?;
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            ids.push(t.next::<u64>()?);
        }
        for id in ids {
            let x: f64 = t.next()?;
            let y: f64 = t.next()?;
            let _z: f64 = t.next()?;
            if parametric == 1 {
                for _ in 0..dim {
                    let _: f64 = t.next()?;
                }
            }
            nodes.insert(id, [x, y]);
        }
    }

    let mut t = Tokens::new(section(secs, "Elements")?);
    let blocks: usize = t.next()?;
    let _total: usize = t.next()?;
    let _min: u64 = t.next()?;
    let _max: u64 = t.next()?;
    let mut triangles = Vec::new();
    let mut lines = Vec::new();
    for _ in 0..blocks {
        let line = t.line();
        let _dim: usize = t.next()?;
        let entity: i64 = t.next()?;
        let kind: u32 = t.next()?;
        let n: usize = t.next()?;
        let per = match kind {
            1 => 2,
            2 => 3,
            15 => 1,
            other => {
                return Err(MeshError::Parse {
                    line,
                    message: format!("unsupported element type {other}"),
                })
            }
        };
        for _ in 0..n {
            let _id: u64 = t.next()?;
            let mut v = [0u64; 3];
            for slot in v.iter_mut().take(per) {
                *slot = t.next()?;
            }
            match kind {
                1 => lines.push((
                    [v[0], v[1]],
                    curve_physical.get(&entity).copied().unwrap_or(0),
                )),
                2 => triangles.push(v),
                _ => {}
            }
        }
    }
    Ok(RawMesh {
        nodes,
        triangles,
        lines,
    })
}

fn build(
    raw: RawMesh,
    markers: &MarkerMap,
    names: &HashMap<i64, String>,
) -> Result<TriMesh, MeshError> {
    // vertices in node-id order, restricted to nodes used by triangles
    let mut used: Vec<u64> = raw.triangles.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let mut index: HashMap<u64, usize> = HashMap::with_capacity(used.len());
    let mut vertices = Vec::with_capacity(used.len());
    for id in used {
        let p = *raw.nodes.get(&id).ok_or(MeshError::Parse {
            line: 0,
            message: format!("element references unknown node {id}"),
        })?;
        index.insert(id, vertices.len());
        vertices.push(p);
    }
    let triangles: Vec<[usize; 3]> = raw
        .triangles
        .iter()
        .map(|t| t.map(|id| index[&id]))
        .collect();
    let mut marks = Vec::new();
    for ([a, b], physical) in raw.lines {
        let Some(marker) = markers.lookup(physical, names) else {
            continue;
        };
        let (Some(&ia), Some(&ib)) = (index.get(&a), index.get(&b)) else {
            return Err(MeshError::Parse {
                line: 0,
                message: format!("boundary line ({a}, {b}) is not part of any triangle"),
            });
        };
        marks.push(([ia, ib], marker));
    }
    TriMesh::new(vertices, triangles, &marks)
}

/// Serializes a mesh as ASCII MSH 2.2 with one physical group per marker.
pub fn write_msh22(mesh: &TriMesh, markers: &MarkerMap) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    let fluid_tag = 100;
    s.push_str("$PhysicalNames\n5\n");
    for m in BoundaryMarker::ALL {
        let tag = markers.tag_of(m).unwrap_or(0);
        let _ = writeln!(s, "1 {tag} \"{}\"", m.name());
    }
    let _ = writeln!(s, "2 {fluid_tag} \"fluid\"");
    s.push_str("$EndPhysicalNames\n$Nodes\n");
    let _ = writeln!(s, "{}", mesh.num_vertices());
    for (i, p) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(s, "{} {} {} 0", i + 1, p[0], p[1]);
    }
    s.push_str("$EndNodes\n$Elements\n");
    let nb = mesh.boundary_edges().len();
    let _ = writeln!(s, "{}", nb + mesh.num_triangles());
    let mut id = 1;
    for e in mesh.boundary_edges() {
        let tag = markers.tag_of(e.marker).unwrap_or(0);
        let _ = writeln!(
            s,
            "{id} 1 2 {tag} {tag} {} {}",
            e.vertices[0] + 1,
            e.vertices[1] + 1
        );
        id += 1;
    }
    for t in mesh.triangles() {
        let _ = writeln!(
            s,
            "{id} 2 2 {fluid_tag} 1 {} {} {}",
            t[0] + 1,
            t[1] + 1,
            t[2] + 1
        );
        id += 1;
    }
    s.push_str("$EndElements\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::{channel_with_circle, ChannelGeometry};

    const TRIANGLE_V2: &str = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n\
$Nodes\n3\n1 0 0 0\n2 1 0 0\n3 0 1 0\n$EndNodes\n\
$Elements\n5\n1 15 2 9 1 1\n2 1 2 3 1 1 2\n3 1 2 3 2 2 3\n4 1 2 3 3 3 1\n5 2 2 7 1 1 2 3\n$EndElements\n";

    #[test]
    fn minimal_v2_triangle() {
        let mesh = parse_gmsh(TRIANGLE_V2, &MarkerMap::default()).unwrap();
        assert_eq!(mesh.num_vertices(), 3);
        assert_eq!(mesh.num_triangles(), 1);
        assert!(mesh
            .boundary_edges()
            .iter()
            .all(|e| e.marker == BoundaryMarker::Wall));
    }

    #[test]
    fn clockwise_triangle_is_normalized() {
        let cw = TRIANGLE_V2.replace("5 2 2 7 1 1 2 3", "5 2 2 7 1 1 3 2");
        let a = parse_gmsh(TRIANGLE_V2, &MarkerMap::default()).unwrap();
        let b = parse_gmsh(&cw, &MarkerMap::default()).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        assert!(b.triangle_area(0) > 0.0);
        assert_eq!(b.triangle_area(0), a.triangle_area(0));
    }

    #[test]
    fn minimal_v4_triangle_with_named_groups() {
        let text = "$MeshFormat\n4.1 0 8\n$EndMeshFormat\n\
$PhysicalNames\n2\n1 11 \"Wall\"\n2 12 \"fluid\"\n$EndPhysicalNames\n\
$Entities\n0 1 1 0\n1 0 0 0 1 1 0 1 11 0\n1 0 0 0 1 1 0 1 12 1 1\n$EndEntities\n\
$Nodes\n1 3 1 3\n2 1 0 3\n1\n2\n3\n0 0 0\n1 0 0\n0 1 0\n$EndNodes\n\
$Elements\n2 4 1 4\n1 1 1 3\n1 1 2\n2 2 3\n3 3 1\n2 1 2 1\n4 1 2 3\n$EndElements\n";
        let mesh = parse_gmsh(text, &MarkerMap::default()).unwrap();
        assert_eq!(mesh.num_triangles(), 1);
        assert!(mesh
            .boundary_edges()
            .iter()
            .all(|e| e.marker == BoundaryMarker::Wall));
    }

    #[test]
    fn missing_marker_is_an_error() {
        let text = TRIANGLE_V2.replace("4 1 2 3 3 3 1", "4 1 2 99 3 3 1");
        let err = parse_gmsh(&text, &MarkerMap::default()).unwrap_err();
        assert!(matches!(err, MeshError::UnmarkedBoundaryEdge(..)));
    }

    #[test]
    fn garbage_reports_line() {
        let text = TRIANGLE_V2.replace("2 1 0 0", "2 1 zero 0");
        match parse_gmsh(&text, &MarkerMap::default()).unwrap_err() {
            MeshError::Parse { line, .. } => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn generated_mesh_round_trips() {
        let geom = ChannelGeometry {
            obstacle_segments: 64,
            ..ChannelGeometry::desk()
        };
        let mesh = channel_with_circle(&geom).unwrap();
        let text = write_msh22(&mesh, &MarkerMap::default());
        let back = parse_gmsh(&text, &MarkerMap::default()).unwrap();
        assert_eq!(back.num_triangles(), mesh.num_triangles());
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.obstacle_loop().unwrap().len(), 64);
    }
}
