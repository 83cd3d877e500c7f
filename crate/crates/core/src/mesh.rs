//! Disk triangulations.
//!
//! The generator places `M` equally spaced nodes on the boundary circle and
//! fills the interior with concentric rings whose radial and tangential
//! spacing both match the boundary edge length. Adjacent rings are zipped
//! together and the result is made Delaunay by Lawson edge flips, so the
//! output depends only on `(center, radius, M)`.
//!
//! Boundary triangles are straight-sided: the computational domain is the
//! inscribed polygon, not the disk itself.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Point, Result};

/// The circle that a generated mesh approximates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Point,
    pub radius: f64,
}

impl Disk {
    /// Unit radial direction through `x`, i.e. the outward normal of the
    /// circle at the radial projection of `x`.
    pub fn radial_normal(&self, x: Point) -> Point {
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        let r = d[0].hypot(d[1]);
        [d[0] / r, d[1] / r]
    }

    /// Radial projection of `x` onto the circle.
    pub fn project(&self, x: Point) -> Point {
        let n = self.radial_normal(x);
        [
            self.center[0] + self.radius * n[0],
            self.center[1] + self.radius * n[1],
        ]
    }
}

/// A boundary edge, oriented counterclockwise with respect to its owning
/// triangle (and hence to the domain).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub triangle: usize,
    /// Local edge index within `triangle`; local edge `k` joins local
    /// vertices `k` and `(k + 1) % 3`.
    pub local_edge: usize,
    /// Unit outward normal of the straight edge.
    pub normal: Point,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    triangle_edges: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    disk: Option<Disk>,
    h_nominal: f64,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Mesh {
    /// Builds a mesh from raw connectivity, deriving edges and the ordered
    /// boundary cycle. Fails if any mesh invariant is violated.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        disk: Option<Disk>,
        h_nominal: f64,
    ) -> Result<Self> {
        let nv = vertices.len();
        if triangles.is_empty() {
            return Err(Error::MeshConstruction("mesh has no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v >= nv) {
                return Err(Error::MeshConstruction(format!(
                    "triangle {t} references vertex {v} but there are only {nv} vertices"
                )));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::MeshConstruction(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
        }

        // Directed half-edges keyed by (from, to).
        let mut half_edges: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let key = (tri[k], tri[(k + 1) % 3]);
                if half_edges.insert(key, (t, k)).is_some() {
                    return Err(Error::MeshConstruction(format!(
                        "directed edge {key:?} appears twice (non-manifold or inconsistent orientation)"
                    )));
                }
            }
        }

        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut triangle_edges = vec![[0usize; 3]; triangles.len()];
        let mut boundary = Vec::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edges.len() - 1
                });
                triangle_edges[t][k] = e;
                if !half_edges.contains_key(&(b, a)) {
                    let (pa, pb) = (vertices[a], vertices[b]);
                    let length = distance(pa, pb);
                    boundary.push(BoundaryEdge {
                        vertices: [a, b],
                        triangle: t,
                        local_edge: k,
                        normal: [(pb[1] - pa[1]) / length, -(pb[0] - pa[0]) / length],
                        length,
                    });
                }
            }
        }

        let boundary_edges = order_boundary_cycle(boundary)?;

        if let Some(disk) = disk {
            let tol = 1e-12 * disk.radius;
            for be in &boundary_edges {
                let p = vertices[be.vertices[0]];
                let r = distance(p, disk.center);
                if (r - disk.radius).abs() > tol {
                    return Err(Error::MeshConstruction(format!(
                        "boundary vertex {} lies at distance {r} from the center, expected {}",
                        be.vertices[0], disk.radius
                    )));
                }
            }
        }

        Ok(Mesh {
            vertices,
            triangles,
            edges,
            triangle_edges,
            boundary_edges,
            disk,
            h_nominal,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Unique undirected edges, each stored with the smaller vertex first.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Global edge index of each local edge `k` (vertices `k`, `k+1`).
    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    /// Boundary edges as one closed counterclockwise cycle.
    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn disk(&self) -> Option<&Disk> {
        self.disk.as_ref()
    }

    pub fn h_nominal(&self) -> f64 {
        self.h_nominal
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [
            self.vertices[tri[0]],
            self.vertices[tri[1]],
            self.vertices[tri[2]],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }
}

fn order_boundary_cycle(edges: Vec<BoundaryEdge>) -> Result<Vec<BoundaryEdge>> {
    if edges.is_empty() {
        return Err(Error::MeshConstruction("mesh has no boundary".into()));
    }
    let mut outgoing: HashMap<usize, usize> = HashMap::new();
    for (i, e) in edges.iter().enumerate() {
        if outgoing.insert(e.vertices[0], i).is_some() {
            return Err(Error::MeshConstruction(format!(
                "boundary vertex {} has more than one outgoing boundary edge",
                e.vertices[0]
            )));
        }
    }
    let start = edges
        .iter()
        .enumerate()
        .min_by_key(|(_, e)| e.vertices[0])
        .map(|(i, _)| i)
        .unwrap();
    let mut ordered = Vec::with_capacity(edges.len());
    let mut current = start;
    loop {
        ordered.push(edges[current]);
        let next_vertex = edges[current].vertices[1];
        match outgoing.get(&next_vertex) {
            Some(&next) if next == start => break,
            Some(&next) => {
                if ordered.len() > edges.len() {
                    return Err(Error::MeshConstruction(
                        "boundary walk does not close".into(),
                    ));
                }
                current = next;
            }
            None => {
                return Err(Error::MeshConstruction(format!(
                    "boundary is not closed at vertex {next_vertex}"
                )))
            }
        }
    }
    if ordered.len() != edges.len() {
        return Err(Error::MeshConstruction(format!(
            "boundary consists of several cycles ({} of {} edges reached)",
            ordered.len(),
            edges.len()
        )));
    }
    Ok(ordered)
}

/// One ring of nodes: `count` vertices starting at `first`, at angles
/// `2π (j + offset) / count`.
#[derive(Clone, Copy)]
struct Ring {
    first: usize,
    count: usize,
    offset: f64,
}

impl Ring {
    fn angle(&self, j: usize) -> f64 {
        2.0 * PI * (j as f64 + self.offset) / self.count as f64
    }
}

/// Generates a quasi-uniform triangulation of the disk with `m` equally
/// spaced boundary nodes. `h_nominal` is set to `1/m`.
pub fn generate_disk_mesh(center: Point, radius: f64, m: usize) -> Result<Mesh> {
    if m < 8 {
        return Err(Error::invalid(format!(
            "boundary node count must be at least 8, got {m}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!(
            "radius must be positive, got {radius}"
        )));
    }

    let n_rings = ((m as f64) / (2.0 * PI)).round().max(1.0) as usize;
    let mut vertices: Vec<Point> = Vec::new();
    let mut rings = Vec::with_capacity(n_rings);
    // Outermost (boundary) ring first so boundary vertices are 0..m.
    for k in (1..=n_rings).rev() {
        let count = if k == n_rings {
            m
        } else {
            ((m * k) as f64 / n_rings as f64).round().max(3.0) as usize
        };
        let offset = if (n_rings - k) % 2 == 1 { 0.5 } else { 0.0 };
        let ring = Ring {
            first: vertices.len(),
            count,
            offset,
        };
        let r = radius * k as f64 / n_rings as f64;
        for j in 0..count {
            let theta = ring.angle(j);
            vertices.push([center[0] + r * theta.cos(), center[1] + r * theta.sin()]);
        }
        rings.push(ring);
    }
    let center_index = vertices.len();
    vertices.push(center);

    let mut triangles = Vec::new();
    for pair in rings.windows(2) {
        stitch_rings(pair[1], pair[0], &mut triangles);
    }
    let innermost = rings[rings.len() - 1];
    for j in 0..innermost.count {
        let a = innermost.first + j;
        let b = innermost.first + (j + 1) % innermost.count;
        triangles.push([center_index, a, b]);
    }

    for (t, tri) in triangles.iter_mut().enumerate() {
        let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
        if area < 0.0 {
            tri.swap(1, 2);
        } else if area == 0.0 {
            return Err(Error::MeshConstruction(format!(
                "ring stitching produced degenerate triangle {t}"
            )));
        }
    }

    delaunay_flips(&vertices, &mut triangles)?;

    Mesh::new(
        vertices,
        triangles,
        Some(Disk { center, radius }),
        1.0 / m as f64,
    )
}

/// Zips the annulus between two rings into triangles, advancing along
/// whichever ring has the smaller next angle.
fn stitch_rings(inner: Ring, outer: Ring, out: &mut Vec<[usize; 3]>) {
    let alpha0 = inner.angle(0);
    // Outer start: the last outer node at or below alpha0 (unwrapped).
    let (j0, beta0) = if outer.angle(0) <= alpha0 {
        let mut j = 0;
        while j + 1 < outer.count && outer.angle(j + 1) <= alpha0 {
            j += 1;
        }
        (j, outer.angle(j))
    } else {
        (outer.count - 1, outer.angle(outer.count - 1) - 2.0 * PI)
    };
    let step_a = 2.0 * PI / inner.count as f64;
    let step_b = 2.0 * PI / outer.count as f64;
    let a = |i: usize| inner.first + i % inner.count;
    let b = |m: usize| outer.first + (j0 + m) % outer.count;

    let (mut i, mut m) = (0, 0);
    while i < inner.count || m < outer.count {
        let advance_inner = if i == inner.count {
            false
        } else if m == outer.count {
            true
        } else {
            alpha0 + step_a * (i + 1) as f64 <= beta0 + step_b * (m + 1) as f64
        };
        if advance_inner {
            out.push([a(i), b(m), a(i + 1)]);
            i += 1;
        } else {
            out.push([a(i), b(m), b(m + 1)]);
            m += 1;
        }
    }
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counterclockwise triangle `(a, b, c)`.
fn incircle(a: Point, b: Point, c: Point, d: Point) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

/// Lawson flips until every interior edge is locally Delaunay. Nearly
/// cocircular configurations are left alone.
fn delaunay_flips(vertices: &[Point], triangles: &mut [[usize; 3]]) -> Result<()> {
    const MAX_PASSES: usize = 1000;
    for _ in 0..MAX_PASSES {
        let mut half_edges: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                half_edges.insert((tri[k], tri[(k + 1) % 3]), (t, k));
            }
        }
        let mut touched = vec![false; triangles.len()];
        let mut flips = 0;
        for t1 in 0..triangles.len() {
            for k1 in 0..3 {
                if touched[t1] {
                    break;
                }
                let tri1 = triangles[t1];
                let (p, q, r) = (tri1[k1], tri1[(k1 + 1) % 3], tri1[(k1 + 2) % 3]);
                let Some(&(t2, k2)) = half_edges.get(&(q, p)) else {
                    continue;
                };
                if touched[t2] || t2 < t1 {
                    continue;
                }
                let s = triangles[t2][(k2 + 2) % 3];
                let (vp, vq, vr, vs) = (vertices[p], vertices[q], vertices[r], vertices[s]);
                let scale = distance(vp, vq).powi(2) * distance(vr, vs).powi(2);
                if incircle(vp, vq, vr, vs) <= 1e-9 * scale {
                    continue;
                }
                let new1 = [r, p, s];
                let new2 = [s, q, r];
                let min_area = 1e-14 * distance(vp, vq).powi(2);
                if signed_area(vr, vp, vs) <= min_area || signed_area(vs, vq, vr) <= min_area {
                    continue;
                }
                triangles[t1] = new1;
                triangles[t2] = new2;
                touched[t1] = true;
                touched[t2] = true;
                flips += 1;
            }
        }
        if flips == 0 {
            return Ok(());
        }
    }
    Err(Error::MeshConstruction(
        "Delaunay flipping did not terminate".into(),
    ))
}

/// Shape and size statistics of a triangulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QualityReport {
    /// Smallest interior angle over all triangles, in degrees.
    pub min_angle_deg: f64,
    pub max_angle_deg: f64,
    /// Largest triangle diameter (longest edge).
    pub h_max: f64,
    /// Smallest triangle diameter.
    pub h_min: f64,
    /// `h_max / h_min`.
    pub diameter_ratio: f64,
    /// Largest ratio of diameter to inscribed-circle diameter.
    pub shape_regularity: f64,
}

pub fn mesh_quality(mesh: &Mesh) -> QualityReport {
    let mut report = QualityReport {
        min_angle_deg: f64::INFINITY,
        max_angle_deg: 0.0,
        h_max: 0.0,
        h_min: f64::INFINITY,
        diameter_ratio: 0.0,
        shape_regularity: 0.0,
    };
    for t in 0..mesh.n_triangles() {
        let p = mesh.triangle_points(t);
        let len = [
            distance(p[1], p[2]),
            distance(p[2], p[0]),
            distance(p[0], p[1]),
        ];
        for k in 0..3 {
            // angle opposite edge k
            let (a, b, c) = (len[k], len[(k + 1) % 3], len[(k + 2) % 3]);
            let cos = ((b * b + c * c - a * a) / (2.0 * b * c)).clamp(-1.0, 1.0);
            let angle = cos.acos().to_degrees();
            report.min_angle_deg = report.min_angle_deg.min(angle);
            report.max_angle_deg = report.max_angle_deg.max(angle);
        }
        let diam = len.iter().cloned().fold(0.0, f64::max);
        let inradius = 2.0 * mesh.triangle_area(t) / (len[0] + len[1] + len[2]);
        report.h_max = report.h_max.max(diam);
        report.h_min = report.h_min.min(diam);
        report.shape_regularity = report.shape_regularity.max(diam / (2.0 * inradius));
    }
    report.diameter_ratio = report.h_max / report.h_min;
    report
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshFile {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    disk: Option<Disk>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h_nominal: Option<f64>,
}

/// Serializes a mesh as JSON with one vertex, triangle or edge per line.
pub fn mesh_to_json(mesh: &Mesh) -> String {
    fn list<T: Serialize>(out: &mut String, key: &str, items: &[T], last: bool) {
        out.push_str(&format!("  \"{key}\": [\n"));
        for (i, item) in items.iter().enumerate() {
            out.push_str("    ");
            out.push_str(&serde_json::to_string(item).expect("plain data serializes"));
            out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
        }
        out.push_str(if last { "  ]\n" } else { "  ],\n" });
    }
    let mut out = String::from("{\n");
    list(&mut out, "vertices", &mesh.vertices, false);
    list(&mut out, "triangles", &mesh.triangles, false);
    let bnd: Vec<[usize; 2]> = mesh.boundary_edges.iter().map(|e| e.vertices).collect();
    list(&mut out, "boundary_edges", &bnd, false);
    if let Some(disk) = &mesh.disk {
        out.push_str(&format!(
            "  \"disk\": {},\n",
            serde_json::to_string(disk).expect("plain data serializes")
        ));
    }
    out.push_str(&format!(
        "  \"h_nominal\": {}\n}}\n",
        serde_json::to_string(&mesh.h_nominal).expect("plain data serializes")
    ));
    out
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, mesh_to_json(mesh))?;
    Ok(())
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let text = fs::read_to_string(path)?;
    mesh_from_json(&text)
}

/// Line (1-based) of the `index`-th entry of the list under `key`, assuming
/// the one-entry-per-line layout written by [`mesh_to_json`].
fn locate_entry(text: &str, key: &str, index: usize) -> Option<usize> {
    let needle = format!("\"{key}\"");
    let start = text.lines().position(|l| l.contains(&needle))?;
    text.lines()
        .enumerate()
        .skip(start + 1)
        .filter(|(_, l)| l.trim_start().starts_with('['))
        .nth(index)
        .map(|(i, _)| i + 1)
}

pub fn mesh_from_json(text: &str) -> Result<Mesh> {
    if text.trim().is_empty() {
        return Err(Error::MeshParse {
            line: Some(1),
            message: "empty mesh file".into(),
        });
    }
    let file: MeshFile = serde_json::from_str(text).map_err(|e| Error::MeshParse {
        line: Some(e.line()),
        message: e.to_string(),
    })?;
    let nv = file.vertices.len();
    for (t, tri) in file.triangles.iter().enumerate() {
        if let Some(&v) = tri.iter().find(|&&v| v >= nv) {
            return Err(Error::MeshParse {
                line: locate_entry(text, "triangles", t),
                message: format!(
                    "triangles[{t}] references vertex {v}, but only {nv} vertices exist"
                ),
            });
        }
    }
    for (i, e) in file.boundary_edges.iter().enumerate() {
        if let Some(&v) = e.iter().find(|&&v| v >= nv) {
            return Err(Error::MeshParse {
                line: locate_entry(text, "boundary_edges", i),
                message: format!(
                    "boundary_edges[{i}] references vertex {v}, but only {nv} vertices exist"
                ),
            });
        }
    }
    let h_nominal = file
        .h_nominal
        .unwrap_or(1.0 / file.boundary_edges.len().max(1) as f64);
    let mesh = Mesh::new(file.vertices, file.triangles, file.disk, h_nominal).map_err(|e| {
        Error::MeshParse {
            line: None,
            message: e.to_string(),
        }
    })?;

    let mut declared: Vec<[usize; 2]> = file
        .boundary_edges
        .iter()
        .map(|e| [e[0].min(e[1]), e[0].max(e[1])])
        .collect();
    let mut actual: Vec<[usize; 2]> = mesh
        .boundary_edges
        .iter()
        .map(|e| {
            [
                e.vertices[0].min(e.vertices[1]),
                e.vertices[0].max(e.vertices[1]),
            ]
        })
        .collect();
    declared.sort_unstable();
    actual.sort_unstable();
    if declared != actual {
        return Err(Error::MeshParse {
            line: locate_entry(text, "boundary_edges", 0),
            message: "declared boundary edges do not match the triangulation's boundary".into(),
        });
    }
    Ok(mesh)
}
