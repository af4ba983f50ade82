use std::path::Path;

use super::geometry::PointCloud;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub(crate) type Vec3 = [f64; 3];

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

/// Triangle soup with optional per-corner normal references.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub normals: Vec<Vec3>,
    /// Per-triangle normal indices, present only if every face supplied them.
    pub normal_indices: Option<Vec<[usize; 3]>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
            normals: Vec::new(),
            normal_indices: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mesh vertices must be finite"));
        }
        for (f, tri) in self.triangles.iter().enumerate() {
            if let Some(&i) = tri.iter().find(|&&i| i >= self.vertices.len()) {
                return Err(Error::invalid(format!(
                    "face {} references missing vertex {}",
                    f + 1,
                    i + 1
                )));
            }
        }
        if let Some(ni) = &self.normal_indices {
            if ni.len() != self.triangles.len() || ni.iter().flatten().any(|&i| i >= self.normals.len()) {
                return Err(Error::invalid("normal indices out of range"));
            }
        }
        if !(self.total_area() > 0.0) {
            return Err(Error::invalid("mesh has zero total surface area"));
        }
        Ok(())
    }

    fn corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * norm3(cross(sub(b, a), sub(c, a)))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Unit face normal by the right-hand rule.
    pub fn face_normal(&self, t: usize) -> Option<Vec3> {
        let [a, b, c] = self.corners(t);
        let n = cross(sub(b, a), sub(c, a));
        let len = norm3(n);
        (len > 0.0).then(|| [n[0] / len, n[1] / len, n[2] / len])
    }
}

fn parse_index(token: &str, count: usize, kind: &str) -> std::result::Result<usize, String> {
    let i: i64 = token.parse().map_err(|_| format!("bad {kind} index {token:?}"))?;
    if i < 1 || i as u64 > count as u64 {
        return Err(format!("{kind} index {i} out of range 1..={count}"));
    }
    Ok(i as usize - 1)
}

fn parse_coords(rest: &[&str], what: &str) -> std::result::Result<Vec3, String> {
    if rest.len() < 3 {
        return Err(format!("{what} needs 3 coordinates, got {}", rest.len()));
    }
    let mut out = [0.0; 3];
    for (o, tok) in out.iter_mut().zip(rest) {
        let v: f64 = tok.parse().map_err(|_| format!("bad {what} coordinate {tok:?}"))?;
        if !v.is_finite() {
            return Err(format!("non-finite {what} coordinate {tok:?}"));
        }
        *o = v;
    }
    Ok(out)
}

/// Parses the OBJ subset `v`, `vn`, `vt` and triangular `f` records.
/// Other statements (`o`, `g`, `s`, `usemtl`, ...) are ignored.
pub fn parse_obj(text: &str, source_name: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut n_texcoords = 0usize;
    let mut triangles = Vec::new();
    let mut normal_indices = Vec::new();
    let mut all_have_normals = true;
    let mut face_no = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let err = |msg: String| Error::Parse {
            source_name: source_name.to_string(),
            line: lineno + 1,
            msg,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        match tag {
            "v" => vertices.push(parse_coords(&rest, "vertex").map_err(err)?),
            "vn" => normals.push(parse_coords(&rest, "normal").map_err(err)?),
            "vt" => n_texcoords += 1,
            "f" => {
                face_no += 1;
                if rest.len() != 3 {
                    return Err(err(format!(
                        "face {face_no} has {} vertices; only triangles are supported",
                        rest.len()
                    )));
                }
                let mut tri = [0usize; 3];
                let mut nrm = [0usize; 3];
                let mut has_normals = true;
                for (c, corner) in rest.iter().enumerate() {
                    let fields: Vec<&str> = corner.split('/').collect();
                    if fields.len() > 3 {
                        return Err(err(format!("face {face_no}: bad corner {corner:?}")));
                    }
                    tri[c] = parse_index(fields[0], vertices.len(), "vertex")
                        .map_err(|m| err(format!("face {face_no}: {m}")))?;
                    if let Some(t) = fields.get(1).filter(|t| !t.is_empty()) {
                        parse_index(t, n_texcoords, "texture").map_err(|m| err(format!("face {face_no}: {m}")))?;
                    }
                    match fields.get(2) {
                        Some(n) if !n.is_empty() => {
                            nrm[c] = parse_index(n, normals.len(), "normal")
                                .map_err(|m| err(format!("face {face_no}: {m}")))?;
                        }
                        Some(_) => return Err(err(format!("face {face_no}: empty normal index"))),
                        None => has_normals = false,
                    }
                }
                triangles.push(tri);
                normal_indices.push(nrm);
                all_have_normals &= has_normals;
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(Error::Parse {
            source_name: source_name.to_string(),
            line: text.lines().count(),
            msg: "no faces".into(),
        });
    }
    let mesh = TriangleMesh {
        vertices,
        triangles,
        normals,
        normal_indices: all_have_normals.then_some(normal_indices),
    };
    mesh.validate()
        .map_err(|e| Error::invalid(format!("{source_name}: {e}")))?;
    Ok(mesh)
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    parse_obj(&text, &path.display().to_string())
}

/// Area-uniform surface samples with face normals.
pub fn sample_mesh_points(mesh: &TriangleMesh, n: usize, rng: &mut Rng) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let mut cum = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cum.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::invalid("mesh has zero total surface area"));
    }
    let last_positive = (0..mesh.triangles.len())
        .rev()
        .find(|&t| mesh.triangle_area(t) > 0.0)
        .expect("positive total area");

    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.uniform() * total;
        let t = cum.partition_point(|&c| c <= u).min(last_positive);
        let [a, b, c] = mesh.corners(t);
        let s1 = rng.uniform().sqrt();
        let r2 = rng.uniform();
        let w = [1.0 - s1, s1 * (1.0 - r2), s1 * r2];
        let p = [0, 1, 2].map(|k| w[0] * a[k] + w[1] * b[k] + w[2] * c[k]);
        points.push(p);
        normals.push(mesh.face_normal(t).expect("chosen triangle has area"));
    }
    PointCloud::new(points, Some(normals))
}
