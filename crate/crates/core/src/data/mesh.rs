use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PointCloud;
use crate::error::{Error, Result};

/// Triangle soup with indexed vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let v = vertices.len();
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= v)) {
            return Err(Error::Data(format!(
                "face {f:?} references a vertex outside 0..{v}"
            )));
        }
        Ok(Self { vertices, faces })
    }

    fn corners(&self, f: usize) -> [[f64; 3]; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized normal `(b − a) × (c − a)`; its length is twice the area.
    fn cross(&self, f: usize) -> [f64; 3] {
        let [a, b, c] = self.corners(f);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let n = self.cross(f);
        0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
    }

    pub fn face_normal(&self, f: usize) -> [f64; 3] {
        let n = self.cross(f);
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if len == 0.0 {
            return [0.0; 3];
        }
        [n[0] / len, n[1] / len, n[2] / len]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }
}

/// Reads an OFF file; polygons are fan-triangulated.
pub fn load_off(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_off(&text, path)
}

/// Parses OFF text. `origin` is only used in error messages.
pub fn parse_off(text: &str, origin: &Path) -> Result<TriangleMesh> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    if !header.starts_with("OFF") {
        return Err(err(hline, format!("expected 'OFF' header, found '{header}'")));
    }
    // Some ModelNet files glue the counts onto the header: "OFF1234 5678 0".
    let rest = header[3..].trim();
    let (cline, counts) = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| err(hline + 1, "missing counts line".into()))?
    } else {
        (hline, rest)
    };
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| err(cline, format!("bad counts line '{counts}': {e}")))?;
    if counts.len() < 2 {
        return Err(err(cline, "counts line needs vertex and face counts".into()));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| err(cline, format!("expected {nv} vertices, file ended early")))?;
        let v: Vec<f64> = l
            .split_whitespace()
            .take(3)
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(ln, format!("bad vertex '{l}': {e}")))?;
        if v.len() != 3 {
            return Err(err(ln, format!("vertex needs 3 coordinates: '{l}'")));
        }
        vertices.push([v[0], v[1], v[2]]);
    }

    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| err(cline, format!("expected {nf} faces, file ended early")))?;
        let mut toks = l.split_whitespace();
        let k: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| err(ln, format!("bad face line '{l}'")))?;
        let idx: Vec<usize> = toks
            .take(k)
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(ln, format!("bad face index in '{l}': {e}")))?;
        if idx.len() != k || k < 3 {
            return Err(err(ln, format!("face needs at least 3 indices: '{l}'")));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= nv) {
            return Err(err(ln, format!("face index {bad} out of range (0..{nv})")));
        }
        for j in 1..k - 1 {
            faces.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    TriangleMesh::new(vertices, faces)
}

/// Area-weighted uniform surface sampling.
///
/// Faces are picked with probability proportional to area and points are
/// uniform within each triangle. With `with_normals` each point carries its
/// source face's unit normal as columns 3..6.
pub fn sample_mesh(mesh: &TriangleMesh, n: usize, seed: u64, with_normals: bool) -> Result<PointCloud> {
    let areas: Vec<f64> = (0..mesh.faces.len()).map(|f| mesh.face_area(f)).collect();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Data("mesh has zero surface area".into()));
    }
    let pick = WeightedIndex::new(&areas).map_err(|e| Error::Data(format!("face weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = if with_normals { 6 } else { 3 };
    let mut features = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let f = pick.sample(&mut rng);
        let [a, b, c] = mesh.corners(f);
        let s = rng.random::<f64>().sqrt();
        let t = rng.random::<f64>();
        let (wa, wb, wc) = (1.0 - s, s * (1.0 - t), s * t);
        for k in 0..3 {
            features.push(wa * a[k] + wb * b[k] + wc * c[k]);
        }
        if with_normals {
            features.extend_from_slice(&mesh.face_normal(f));
        }
    }
    PointCloud::new(features, dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TETRA: &str = "OFF\n# unit tetrahedron\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";

    #[test]
    fn parses_tetrahedron() {
        let m = parse_off(TETRA, Path::new("t.off")).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.faces.len(), 4);
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let m = parse_off("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n", Path::new("q")).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn glued_header_counts() {
        let m = parse_off("OFF3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n", Path::new("g")).unwrap();
        assert_eq!(m.faces.len(), 1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_off("3 1 0\n0 0 0\n", Path::new("x.off")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n", Path::new("x.off")) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 6);
                assert!(message.contains("out of range"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_off("OFF\n3 1 0\n0 0 0\n1 0\n0 1 0\n3 0 1 2\n", Path::new("x")).is_err());
    }

    #[test]
    fn planar_face_normals_and_reproducibility() {
        let m = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let pc = sample_mesh(&m, 50, 4, true).unwrap();
        for i in 0..pc.len() {
            let p = pc.point(i);
            assert_eq!(&p[3..], &[0.0, 0.0, 1.0]);
            assert!(p[0] >= 0.0 && p[1] >= 0.0 && p[0] + p[1] <= 1.0 + 1e-12);
        }
        assert_eq!(pc, sample_mesh(&m, 50, 4, true).unwrap());
    }

    #[test]
    fn zero_area_mesh_is_rejected() {
        let m = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(sample_mesh(&m, 5, 0, false), Err(Error::Data(_))));
    }
}
