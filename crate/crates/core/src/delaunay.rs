//! Incremental Bowyer-Watson Delaunay triangulation of 2D points.
//!
//! Hull edges are closed off by ghost triangles sharing a single vertex at
//! infinity, so the result always tiles the convex hull exactly without a
//! bounding super-triangle. Predicates are evaluated relative to the
//! inserted point; for integer coordinates below 4096 every intermediate is
//! an exactly representable integer and the predicates are exact.

use crate::error::{Error, Result};

const GHOST: usize = usize::MAX;
const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Tri {
    /// Counterclockwise vertices; `GHOST` marks the vertex at infinity.
    v: [usize; 3],
    /// `n[i]` is the triangle across the edge opposite `v[i]`.
    n: [usize; 3],
    alive: bool,
}

impl Tri {
    fn is_ghost(&self) -> bool {
        self.v.contains(&GHOST)
    }

    fn edge(&self, i: usize) -> (usize, usize) {
        (self.v[(i + 1) % 3], self.v[(i + 2) % 3])
    }
}

#[inline]
fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counterclockwise triangle `a b c`.
#[inline]
pub fn in_circle(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let alift = adx * adx + ady * ady;
    let blift = bdx * bdx + bdy * bdy;
    let clift = cdx * cdx + cdy * cdy;
    alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) + clift * (adx * bdy - bdx * ady)
}

struct Builder<'a> {
    pts: &'a [[f64; 2]],
    tris: Vec<Tri>,
    free: Vec<usize>,
    stamp: Vec<u32>,
    epoch: u32,
    last: usize,
}

impl<'a> Builder<'a> {
    fn p(&self, i: usize) -> [f64; 2] {
        self.pts[i]
    }

    /// Circumcircle test generalized to ghost triangles, whose "circle" is
    /// the open outer half-plane of their hull edge plus the edge interior.
    fn circle_contains(&self, t: usize, p: [f64; 2]) -> bool {
        let tri = &self.tris[t];
        if let Some(k) = tri.v.iter().position(|&v| v == GHOST) {
            let a = self.p(tri.v[(k + 1) % 3]);
            let b = self.p(tri.v[(k + 2) % 3]);
            let o = orient(a, b, p);
            if o != 0.0 {
                return o > 0.0;
            }
            let along_a = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]);
            let along_b = (p[0] - b[0]) * (a[0] - b[0]) + (p[1] - b[1]) * (a[1] - b[1]);
            return along_a > 0.0 && along_b > 0.0;
        }
        in_circle(self.p(tri.v[0]), self.p(tri.v[1]), self.p(tri.v[2]), p) > 0.0
    }

    fn alloc(&mut self, tri: Tri) -> usize {
        if let Some(i) = self.free.pop() {
            self.tris[i] = tri;
            i
        } else {
            self.tris.push(tri);
            self.stamp.push(0);
            self.tris.len() - 1
        }
    }

    /// Triangle whose circumcircle contains `p` and which contains `p`
    /// (real triangle) or sees it beyond its hull edge (ghost). `None` for
    /// a duplicate of an existing vertex.
    fn locate(&self, p: [f64; 2]) -> Option<usize> {
        let mut t = self.last;
        let limit = 4 * self.tris.len() + 16;
        for _ in 0..limit {
            let tri = &self.tris[t];
            if tri.is_ghost() {
                return Some(t);
            }
            let mut moved = false;
            for i in 0..3 {
                let (a, b) = tri.edge(i);
                if orient(self.p(a), self.p(b), p) < 0.0 {
                    t = tri.n[i];
                    moved = true;
                    break;
                }
            }
            if !moved {
                return if tri.v.iter().any(|&v| self.p(v) == p) { None } else { Some(t) };
            }
        }
        // Walk did not terminate (only possible with inexact predicates).
        let mut ghost_hit = None;
        for (i, tri) in self.tris.iter().enumerate().filter(|(_, t)| t.alive) {
            if tri.is_ghost() {
                if ghost_hit.is_none() && self.circle_contains(i, p) {
                    ghost_hit = Some(i);
                }
                continue;
            }
            if (0..3).all(|k| {
                let (a, b) = tri.edge(k);
                orient(self.p(a), self.p(b), p) >= 0.0
            }) {
                return if tri.v.iter().any(|&v| self.p(v) == p) { None } else { Some(i) };
            }
        }
        ghost_hit
    }

    fn insert(&mut self, vi: usize) {
        let p = self.p(vi);
        let Some(start) = self.locate(p) else { return };
        self.epoch += 1;
        let epoch = self.epoch;

        let mut cavity = vec![start];
        self.stamp[start] = epoch;
        // (a, b, outside triangle) with the cavity on the left of a -> b.
        let mut boundary: Vec<(usize, usize, usize)> = Vec::new();
        let mut k = 0;
        while k < cavity.len() {
            let t = cavity[k];
            k += 1;
            for i in 0..3 {
                let nb = self.tris[t].n[i];
                if self.stamp[nb] == epoch {
                    continue;
                }
                if self.circle_contains(nb, p) {
                    self.stamp[nb] = epoch;
                    cavity.push(nb);
                } else {
                    let (a, b) = self.tris[t].edge(i);
                    boundary.push((a, b, nb));
                }
            }
        }
        // An outside triangle may be recorded as boundary of an edge whose
        // inner side was added to the cavity later; drop those entries.
        boundary.retain(|&(_, _, out)| self.stamp[out] != epoch);

        for &t in &cavity {
            self.tris[t].alive = false;
            self.free.push(t);
        }

        let mut by_start = std::collections::HashMap::with_capacity(boundary.len());
        let mut by_end = std::collections::HashMap::with_capacity(boundary.len());
        let mut created = Vec::with_capacity(boundary.len());
        for &(a, b, out) in &boundary {
            let t = self.alloc(Tri {
                v: [a, b, vi],
                n: [NONE, NONE, out],
                alive: true,
            });
            // Point the outside triangle back at the new one.
            let out_tri = &mut self.tris[out];
            for i in 0..3 {
                let (x, y) = out_tri.edge(i);
                if x == b && y == a {
                    out_tri.n[i] = t;
                }
            }
            by_start.insert(a, t);
            by_end.insert(b, t);
            created.push(t);
        }
        for &t in &created {
            let [a, b, _] = self.tris[t].v;
            // Edge (b, p) is opposite a; edge (p, a) is opposite b.
            self.tris[t].n[0] = by_start[&b];
            self.tris[t].n[1] = by_end[&a];
            if !self.tris[t].is_ghost() {
                self.last = t;
            }
        }
    }
}

/// Delaunay triangulation of `points`; returns counterclockwise index
/// triples into `points`.
///
/// Points are inserted in `(y, x)` order, so the output depends only on the
/// point set. Exact duplicates are ignored.
pub fn delaunay_triangulate(points: &[[f64; 2]]) -> Result<Vec<[usize; 3]>> {
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidArgument("delaunay: non-finite point".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (points[i], points[j]);
        a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0])).then(i.cmp(&j))
    });
    order.dedup_by(|a, b| points[*a] == points[*b]);
    let pts: Vec<[f64; 2]> = order.iter().map(|&i| points[i]).collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientSupport(format!(
            "delaunay needs 3 distinct points, got {}",
            pts.len()
        )));
    }
    let Some(third) = (2..pts.len()).find(|&k| orient(pts[0], pts[1], pts[k]) != 0.0) else {
        return Err(Error::InsufficientSupport("all points are collinear".into()));
    };
    let (a, mut b, mut c) = (0, 1, third);
    if orient(pts[a], pts[b], pts[c]) < 0.0 {
        std::mem::swap(&mut b, &mut c);
    }

    let mut builder = Builder {
        pts: &pts,
        tris: Vec::with_capacity(2 * pts.len() + 8),
        free: Vec::new(),
        stamp: Vec::new(),
        epoch: 0,
        last: 0,
    };
    // Seed triangle plus one ghost per edge: 0 = abc, 1 = ghost(ab),
    // 2 = ghost(bc), 3 = ghost(ca).
    let seed = [
        Tri { v: [a, b, c], n: [2, 3, 1], alive: true },
        Tri { v: [b, a, GHOST], n: [3, 2, 0], alive: true },
        Tri { v: [c, b, GHOST], n: [1, 3, 0], alive: true },
        Tri { v: [a, c, GHOST], n: [2, 1, 0], alive: true },
    ];
    for t in seed {
        builder.alloc(t);
    }
    for vi in 0..pts.len() {
        if vi != a && vi != b && vi != c {
            builder.insert(vi);
        }
    }

    let mut out: Vec<[usize; 3]> = builder
        .tris
        .iter()
        .filter(|t| t.alive && !t.is_ghost())
        .map(|t| {
            let v = t.v.map(|i| order[i]);
            // Rotate so the smallest index comes first; keeps orientation.
            let k = (0..3).min_by_key(|&k| v[k]).unwrap();
            [v[k], v[(k + 1) % 3], v[(k + 2) % 3]]
        })
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Circumcircle emptiness check used by tests and debug assertions:
/// true when no point lies strictly inside any triangle's circumcircle by
/// more than `slack` (relative to the circle's squared radius).
pub fn is_delaunay(points: &[[f64; 2]], triangles: &[[usize; 3]], slack: f64) -> bool {
    triangles.iter().all(|t| {
        let (a, b, c) = (points[t[0]], points[t[1]], points[t[2]]);
        let (ux, uy, r2) = circumcircle(a, b, c);
        points.iter().enumerate().all(|(i, p)| {
            if t.contains(&i) {
                return true;
            }
            let d2 = (p[0] - ux).powi(2) + (p[1] - uy).powi(2);
            d2 >= r2 * (1.0 - slack)
        })
    })
}

/// Circumcenter and squared radius.
pub fn circumcircle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> (f64, f64, f64) {
    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    let sa = a[0] * a[0] + a[1] * a[1];
    let sb = b[0] * b[0] + b[1] * b[1];
    let sc = c[0] * c[0] + c[1] * c[1];
    let ux = (sa * (b[1] - c[1]) + sb * (c[1] - a[1]) + sc * (a[1] - b[1])) / d;
    let uy = (sa * (c[0] - b[0]) + sb * (a[0] - c[0]) + sc * (b[0] - a[0])) / d;
    let r2 = (a[0] - ux).powi(2) + (a[1] - uy).powi(2);
    (ux, uy, r2)
}

/// Twice the signed area of a triangle (positive when counterclockwise).
pub fn signed_area2(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    orient(a, b, c)
}
