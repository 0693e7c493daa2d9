//! Conforming P1 triangulations of the interior domain.
//!
//! Presets are meshed as mapped structured blocks: a sequence of node
//! "rings" (cross-sections of a channel, log-polar rings around an obstacle,
//! or concentric circles) where each consecutive pair is stitched into a
//! strip of triangles. Boundary edges are then classified against the
//! geometry curves, so every tag is a geometric fact rather than bookkeeping.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{CBarrier, Curve, GeometryDesc, Layout, Point};

/// Distance within which a boundary node must lie on its geometry curve.
pub const ON_CURVE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    /// `(i, j, tag)`; interface edges carry tags `>= 100`.
    pub boundary_edges: Vec<(usize, usize, i32)>,
}

fn signed_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(&self.nodes[a], &self.nodes[b], &self.nodes[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut min = f64::INFINITY;
        for tri in &self.triangles {
            for k in 0..3 {
                let p = self.nodes[tri[k]];
                let u = self.nodes[tri[(k + 1) % 3]] - p;
                let v = self.nodes[tri[(k + 2) % 3]] - p;
                let ang = (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos();
                min = min.min(ang);
            }
        }
        min.to_degrees()
    }

    /// Longest edge length.
    pub fn max_edge(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
            .map(|(i, j)| (self.nodes[i] - self.nodes[j]).norm())
            .fold(0.0, f64::max)
    }

    /// Edges of the given tag, in file order.
    pub fn edges_with_tag(&self, tag: i32) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.boundary_edges
            .iter()
            .filter(move |e| e.2 == tag)
            .map(|e| (e.0, e.1))
    }

    /// Verifies orientation, conformity (each interior edge shared by exactly
    /// two triangles) and that the tagged edges are exactly the boundary.
    pub fn check(&self) -> Result<()> {
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= self.nodes.len()) {
                return Err(Error::Mesh(format!("triangle {t} has out-of-range node")));
            }
            if self.triangle_area(t) <= 0.0 {
                return Err(Error::Mesh(format!("triangle {t} not positively oriented")));
            }
        }
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *count.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        if let Some((e, c)) = count.iter().find(|(_, &c)| c > 2) {
            return Err(Error::Mesh(format!("edge {e:?} shared by {c} triangles")));
        }
        let mut boundary: Vec<_> = count
            .iter()
            .filter(|(_, &c)| c == 1)
            .map(|(e, _)| *e)
            .collect();
        let mut tagged: Vec<_> = self
            .boundary_edges
            .iter()
            .map(|&(i, j, _)| edge_key(i, j))
            .collect();
        boundary.sort_unstable();
        tagged.sort_unstable();
        if boundary != tagged {
            return Err(Error::Mesh(format!(
                "tagged edges ({}) do not match triangulation boundary ({})",
                tagged.len(),
                boundary.len()
            )));
        }
        Ok(())
    }

    /// Checks that each tagged edge lies on the geometry curve of its tag.
    pub fn check_tags(&self, g: &GeometryDesc) -> Result<()> {
        for &(i, j, tag) in &self.boundary_edges {
            let curve = g
                .curve_for_tag(tag)
                .ok_or_else(|| Error::Mesh(format!("edge tag {tag} absent from geometry")))?;
            if !edge_on_curve(&self.nodes[i], &self.nodes[j], &curve) {
                return Err(Error::Mesh(format!(
                    "edge ({i}, {j}) does not lie on the curve of tag {tag}"
                )));
            }
        }
        Ok(())
    }
}

fn edge_key(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

fn edge_on_curve(p: &Point, q: &Point, curve: &Curve) -> bool {
    if curve.locate(p, ON_CURVE_TOL).is_none() || curve.locate(q, ON_CURVE_TOL).is_none() {
        return false;
    }
    match *curve {
        Curve::Line { .. } => curve.locate(&((p + q) * 0.5), ON_CURVE_TOL).is_some(),
        Curve::Arc { center, radius, .. } => {
            // The chord must be short and its radial projection on the arc.
            let m = (p + q) * 0.5;
            let rel = m - center;
            (p - q).norm() < radius
                && rel.norm() > 0.0
                && curve
                    .locate(&(center + rel * (radius / rel.norm())), ON_CURVE_TOL)
                    .is_some()
        }
    }
}

#[derive(Default)]
struct Builder {
    nodes: Vec<Point>,
    tris: Vec<[usize; 3]>,
}

/// One row of nodes along with a monotone stitching parameter.
struct Ring {
    ids: Vec<usize>,
    param: Vec<f64>,
}

impl Builder {
    fn node(&mut self, p: Point) -> usize {
        self.nodes.push(p);
        self.nodes.len() - 1
    }

    fn ring(&mut self, pts: &[Point], param: Vec<f64>) -> Ring {
        let ids = pts.iter().map(|p| self.node(*p)).collect();
        Ring { ids, param }
    }

    fn tri(&mut self, a: usize, b: usize, c: usize) {
        let area = signed_area(&self.nodes[a], &self.nodes[b], &self.nodes[c]);
        if area < 0.0 {
            self.tris.push([a, c, b]);
        } else {
            self.tris.push([a, b, c]);
        }
    }

    /// Zips two open rings whose parameters span the same range.
    fn stitch(&mut self, a: &Ring, b: &Ring) {
        let (na, nb) = (a.ids.len() - 1, b.ids.len() - 1);
        let (mut i, mut j) = (0, 0);
        while i < na || j < nb {
            let advance_a = if i == na {
                false
            } else if j == nb {
                true
            } else {
                let (pa, pb) = (a.param[i + 1], b.param[j + 1]);
                let scale = 1e-9 * (pa.abs() + pb.abs() + 1.0);
                if pa < pb - scale {
                    true
                } else if pb < pa - scale {
                    false
                } else {
                    self.prefer_diagonal_a(a.ids[i], a.ids[i + 1], b.ids[j], b.ids[j + 1])
                }
            };
            if advance_a {
                self.tri(a.ids[i], a.ids[i + 1], b.ids[j]);
                i += 1;
            } else {
                self.tri(a.ids[i], b.ids[j + 1], b.ids[j]);
                j += 1;
            }
        }
    }

    /// For the quad `a0 a1 b1 b0`, true when the diagonal `a1-b0` should be
    /// used. Shorter diagonal wins; exact ties go to the diagonal touching the
    /// node farthest from `y = 0` so mirror-symmetric input meshes stay
    /// mirror-symmetric.
    fn prefer_diagonal_a(&self, a0: usize, a1: usize, b0: usize, b1: usize) -> bool {
        let p = |k: usize| self.nodes[k];
        let da = (p(a1) - p(b0)).norm_squared();
        let db = (p(a0) - p(b1)).norm_squared();
        if (da - db).abs() > 1e-12 * (da + db) {
            return da < db;
        }
        let ext = |k: usize| p(k).y.abs();
        let ea = ext(a1).max(ext(b0));
        let eb = ext(a0).max(ext(b1));
        if ea != eb {
            return ea > eb;
        }
        true
    }

    /// Zips two closed rings given by CCW angles.
    fn stitch_closed(&mut self, a: &Ring, b: &Ring) {
        let base = a.param[0];
        let wrap = |t: f64| (t - base + PI).rem_euclid(2.0 * PI) - PI;
        // Start b at the node angularly closest to a[0].
        let start = (0..b.ids.len())
            .min_by(|&x, &y| wrap(b.param[x]).abs().total_cmp(&wrap(b.param[y]).abs()))
            .unwrap_or(0);
        let unroll_a = {
            let mut ids = a.ids.clone();
            ids.push(a.ids[0]);
            let mut param: Vec<f64> = Vec::with_capacity(ids.len());
            for k in 0..a.ids.len() {
                let t = (a.param[k] - base).rem_euclid(2.0 * PI);
                param.push(if k == 0 { 0.0 } else { t });
            }
            param.push(2.0 * PI);
            Ring { ids, param }
        };
        let unroll_b = {
            let n = b.ids.len();
            let mut ids = Vec::with_capacity(n + 1);
            let mut param = Vec::with_capacity(n + 1);
            let t0 = wrap(b.param[start]);
            for k in 0..n {
                let idx = (start + k) % n;
                ids.push(b.ids[idx]);
                let t = if k == 0 {
                    t0
                } else {
                    t0 + (b.param[idx] - b.param[start]).rem_euclid(2.0 * PI)
                };
                param.push(t);
            }
            ids.push(b.ids[start]);
            param.push(t0 + 2.0 * PI);
            Ring { ids, param }
        };
        self.stitch(&unroll_a, &unroll_b);
    }

    /// Triangle fan from a centre node to a closed ring.
    fn fan(&mut self, center: usize, ring: &Ring) {
        let n = ring.ids.len();
        for k in 0..n {
            self.tri(center, ring.ids[k], ring.ids[(k + 1) % n]);
        }
    }
}

fn divisions(length: f64, h: f64) -> usize {
    ((length / h) - 1e-9).ceil().max(1.0) as usize
}

/// Generates a conforming triangulation of the preset domain with target
/// edge length `h0`.
pub fn generate(g: &GeometryDesc, h0: f64) -> Result<Mesh> {
    if !(h0 > 0.0 && h0.is_finite()) {
        return Err(Error::Mesh(format!("target edge length {h0} must be positive")));
    }
    let mut b = Builder::default();
    match &g.layout {
        Layout::Rectangle { x0, x1, y0, y1 } => rectangle(&mut b, *x0, *x1, *y0, *y1, h0),
        Layout::Channel {
            inner_radius,
            outer_radius,
            angle,
            leg,
        } => channel(&mut b, *inner_radius, *outer_radius, *angle, *leg, h0),
        Layout::ObstructedStrip {
            delta,
            radius,
            length,
        } => obstructed_strip(&mut b, *delta, *radius, *length, h0)?,
        Layout::Polar { outer, barrier } => polar(&mut b, *outer, barrier.as_ref(), h0)?,
    }
    finalize(b, g)
}

fn rectangle(b: &mut Builder, x0: f64, x1: f64, y0: f64, y1: f64, h: f64) {
    let nx = divisions(x1 - x0, h);
    let ny = divisions(y1 - y0, h);
    let param: Vec<f64> = (0..=ny).map(|j| j as f64 / ny as f64).collect();
    let mut prev: Option<Ring> = None;
    for i in 0..=nx {
        let x = x0 + (x1 - x0) * i as f64 / nx as f64;
        let pts: Vec<Point> = param.iter().map(|t| Point::new(x, y0 + (y1 - y0) * t)).collect();
        let ring = b.ring(&pts, param.clone());
        if let Some(p) = &prev {
            b.stitch(p, &ring);
        }
        prev = Some(ring);
    }
}

fn channel(b: &mut Builder, ri: f64, ro: f64, angle: f64, leg: f64, h: f64) {
    let nw = divisions(ro - ri, h);
    let nl = divisions(leg, h);
    let th0 = -PI / 2.0;
    let th1 = th0 + angle;
    let radial = |th: f64, r: f64| Point::new(r * th.cos(), r * th.sin());
    let tangent = Point::new(-th1.sin(), th1.cos());

    let mut sections: Vec<(Point, Point)> = Vec::new();
    for k in 0..=nl {
        let x = -leg + leg * k as f64 / nl as f64;
        sections.push((Point::new(x, -ri), Point::new(x, -ro)));
    }
    if angle > 0.0 {
        let ns = divisions(0.5 * (ri + ro) * angle, h);
        for k in 1..=ns {
            let th = th0 + angle * k as f64 / ns as f64;
            sections.push((radial(th, ri), radial(th, ro)));
        }
    }
    for k in 1..=nl {
        let t = leg * k as f64 / nl as f64;
        sections.push((radial(th1, ri) + tangent * t, radial(th1, ro) + tangent * t));
    }
    let param: Vec<f64> = (0..=nw).map(|j| j as f64 / nw as f64).collect();
    let mut prev: Option<Ring> = None;
    for (pin, pout) in sections {
        let pts: Vec<Point> = param.iter().map(|t| pin + (pout - pin) * *t).collect();
        let ring = b.ring(&pts, param.clone());
        if let Some(p) = &prev {
            b.stitch(p, &ring);
        }
        prev = Some(ring);
    }
}

/// Log-polar rings around the obstacle centre, interpolating from the
/// obstacle arc to the outer rectangle boundary.
fn obstructed_strip(b: &mut Builder, delta: f64, radius: f64, length: f64, h: f64) -> Result<()> {
    let center = Point::new(0.0, delta);
    let nb = divisions(length, h);
    let nr = divisions(2.0, h);
    // Outer boundary from (0,-1) along the bottom, up the right side, back
    // along the top to (0,1). Nodes on each side are equally spaced in angle
    // seen from the obstacle centre; the expressions are chosen so that
    // y -> -y maps the node set onto itself exactly when delta = 0.
    let (lo, hi) = (-1.0 - delta, 1.0 - delta);
    let c_b = lo.atan2(length);
    let c_t = hi.atan2(length);
    let mut bottom = vec![Point::new(0.0, -1.0)];
    let mut top = vec![Point::new(0.0, 1.0)];
    for i in 1..nb {
        let f = i as f64 / nb as f64;
        let tb = -PI / 2.0 + (PI / 2.0 + c_b) * f;
        let tt = PI / 2.0 - (PI / 2.0 - c_t) * f;
        bottom.push(Point::new(lo / tb.tan(), -1.0));
        top.push(Point::new(hi / tt.tan(), 1.0));
    }
    bottom.push(Point::new(length, -1.0));
    top.push(Point::new(length, 1.0));
    let (mid, half) = (0.5 * (c_t + c_b), 0.5 * (c_t - c_b));
    let mut outer = bottom;
    for j in 1..nr {
        let th = mid + half * (2 * j as i64 - nr as i64) as f64 / nr as f64;
        outer.push(Point::new(length, delta + length * th.tan()));
    }
    outer.extend(top.into_iter().rev());
    let n = outer.len() - 1;
    let angles: Vec<f64> = outer
        .iter()
        .map(|p| (p.y - center.y).atan2(p.x - center.x))
        .collect();
    for w in angles.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Mesh("outer boundary is not star-shaped about the obstacle".into()));
        }
    }
    let dist: Vec<f64> = outer.iter().map(|p| (p - center).norm()).collect();
    let mean_log = dist.iter().map(|d| (d / radius).ln()).sum::<f64>() / dist.len() as f64;
    let mean_dtheta = PI / n as f64;
    let nt = ((mean_log / mean_dtheta).ceil() as usize).max(1);
    // Uniform angular spacing on the obstacle, blended towards the ray
    // angles of the outer nodes.
    let obstacle_angles: Vec<f64> = (0..=n)
        .map(|j| PI * (2 * j as i64 - n as i64) as f64 / (2 * n) as f64)
        .collect();
    let param: Vec<f64> = (0..=n).map(|j| j as f64 / n as f64).collect();
    let mut prev: Option<Ring> = None;
    for k in 0..=nt {
        let t = k as f64 / nt as f64;
        let pts: Vec<Point> = (0..=n)
            .map(|j| {
                if k == nt {
                    outer[j]
                } else {
                    let d = radius * (dist[j] / radius).powf(t);
                    let th = (1.0 - t) * obstacle_angles[j] + t * angles[j];
                    center + Point::new(th.cos(), th.sin()) * d
                }
            })
            .collect();
        let ring = b.ring(&pts, param.clone());
        if let Some(p) = &prev {
            b.stitch(p, &ring);
        }
        prev = Some(ring);
    }
    Ok(())
}

/// Angles (CCW) for a closed ring at radius `r`, uniform with a node at pi.
fn uniform_angles(r: f64, h: f64) -> Vec<f64> {
    let n = divisions(2.0 * PI * r, h).max(6);
    (0..n).map(|k| PI + 2.0 * PI * k as f64 / n as f64).collect()
}

fn circle_points(r: f64, angles: &[f64]) -> Vec<Point> {
    angles.iter().map(|t| Point::new(r * t.cos(), r * t.sin())).collect()
}

/// Concentric rings around the origin; with a barrier, the rings at the
/// barrier radii carry nodes at the opening edges and the opening itself is
/// filled by open rings.
fn polar(b: &mut Builder, outer: f64, barrier: Option<&CBarrier>, h: f64) -> Result<()> {
    let mut radii: Vec<f64> = Vec::new();
    let (r1, r2) = match barrier {
        Some(c) => (c.inner, c.inner + c.thickness),
        None => (outer, outer),
    };
    let n1 = divisions(r1, h);
    for k in 1..=n1 {
        radii.push(r1 * k as f64 / n1 as f64);
    }
    let center = b.node(Point::new(0.0, 0.0));
    let mut prev: Option<Ring> = None;
    let closed_ring = |b: &mut Builder, r: f64, angles: Vec<f64>| {
        let pts = circle_points(r, &angles);
        b.ring(&pts, angles)
    };
    let gap_angle = |r: f64, eps: f64| (eps / r).asin();

    // Angles of a barrier ring: the opening [-tg, tg] with ng segments, then
    // the remainder of the circle.
    let barrier_angles = |r: f64, eps: f64, ng: usize| -> (Vec<f64>, usize) {
        let tg = gap_angle(r, eps);
        let no = divisions(r * (2.0 * PI - 2.0 * tg), h);
        let mut ang: Vec<f64> = (0..=ng).map(|k| -tg + 2.0 * tg * k as f64 / ng as f64).collect();
        for k in 1..no {
            ang.push(tg + (2.0 * PI - 2.0 * tg) * k as f64 / no as f64);
        }
        (ang, ng + 1)
    };

    let ng = barrier.map(|c| divisions(2.0 * c.eps, h).max(2)).unwrap_or(0);
    for (k, &r) in radii.iter().enumerate() {
        let last = k + 1 == radii.len();
        let ring = match barrier {
            Some(c) if last => barrier_angles(r, c.eps, ng).0,
            _ => uniform_angles(r, h),
        };
        let ring = closed_ring(b, r, ring);
        match &prev {
            None => b.fan(center, &ring),
            Some(p) => b.stitch_closed(p, &ring),
        }
        prev = Some(ring);
    }
    let Some(c) = barrier else {
        return Ok(());
    };
    if outer <= r2 {
        return Err(Error::Mesh("artificial circle inside the barrier".into()));
    }
    // Opening between the two barrier radii.
    let inner_ring = prev.take().expect("inner disc has at least one ring");
    let sub = |ring: &Ring, count: usize| Ring {
        ids: ring.ids[..count].to_vec(),
        param: (0..count).map(|k| k as f64 / (count - 1) as f64).collect(),
    };
    let nbnd = divisions(c.thickness, h);
    let mut open_prev = sub(&inner_ring, ng + 1);
    for k in 1..nbnd {
        let r = r1 + c.thickness * k as f64 / nbnd as f64;
        let tg = gap_angle(r, c.eps);
        let ang: Vec<f64> = (0..=ng).map(|i| -tg + 2.0 * tg * i as f64 / ng as f64).collect();
        let pts = circle_points(r, &ang);
        let ring = b.ring(&pts, (0..=ng).map(|i| i as f64 / ng as f64).collect());
        b.stitch(&open_prev, &ring);
        open_prev = ring;
    }
    let (ang2, _) = barrier_angles(r2, c.eps, ng);
    let ring2 = closed_ring(b, r2, ang2);
    b.stitch(&open_prev, &sub(&ring2, ng + 1));

    // Outside the barrier out to the artificial circle.
    let nout = divisions(outer - r2, h);
    let mut prev = ring2;
    for k in 1..=nout {
        let r = r2 + (outer - r2) * k as f64 / nout as f64;
        let r = if k == nout { outer } else { r };
        let ring = closed_ring(b, r, uniform_angles(r, h));
        b.stitch_closed(&prev, &ring);
        prev = ring;
    }
    Ok(())
}

/// Orients triangles, extracts the boundary and tags every boundary edge by
/// the geometry curve it lies on.
fn finalize(b: Builder, g: &GeometryDesc) -> Result<Mesh> {
    let Builder { nodes, tris } = b;
    for (t, tri) in tris.iter().enumerate() {
        let area = signed_area(&nodes[tri[0]], &nodes[tri[1]], &nodes[tri[2]]);
        if area <= 1e-14 * g.area() {
            return Err(Error::Mesh(format!(
                "degenerate triangle {t} (area {area:e}); target size too coarse for the geometry"
            )));
        }
    }
    let boundary_edges = tag_boundary(&nodes, &tris, g)?;
    let mesh = Mesh {
        nodes,
        triangles: tris,
        boundary_edges,
    };
    mesh.check()?;
    Ok(mesh)
}

fn tag_boundary(nodes: &[Point], tris: &[[usize; 3]], g: &GeometryDesc) -> Result<Vec<(usize, usize, i32)>> {
    // Directed edges of boundary appear once; keep orientation from the
    // CCW triangle.
    let mut count: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
    for tri in tris {
        for k in 0..3 {
            let (i, j) = (tri[k], tri[(k + 1) % 3]);
            let e = count.entry(edge_key(i, j)).or_insert((i, j, 0));
            e.2 += 1;
        }
    }
    let mut curves: Vec<(i32, Curve)> = g.segments.iter().map(|s| (s.tag, s.curve)).collect();
    curves.extend(g.interfaces().iter().map(|i| (i.tag(), i.curve())));
    let mut edges: Vec<(usize, usize, i32)> = Vec::new();
    let mut keys: Vec<_> = count.into_iter().filter(|(_, v)| v.2 == 1).collect();
    keys.sort_unstable_by_key(|(k, _)| *k);
    for (_, (i, j, _)) in keys {
        let tag = curves
            .iter()
            .find(|(_, c)| edge_on_curve(&nodes[i], &nodes[j], c))
            .map(|(t, _)| *t)
            .ok_or_else(|| {
                Error::Mesh(format!(
                    "boundary edge ({:.6}, {:.6})-({:.6}, {:.6}) lies on no geometry curve",
                    nodes[i].x, nodes[i].y, nodes[j].x, nodes[j].y
                ))
            })?;
        edges.push((i, j, tag));
    }
    Ok(edges)
}

/// Uniform red refinement: every triangle is split into four by its edge
/// midpoints; midpoints of boundary edges on arcs are projected radially.
pub fn refine(m: &Mesh, g: &GeometryDesc) -> Result<Mesh> {
    let mut nodes = m.nodes.clone();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let tag_of: HashMap<(usize, usize), i32> = m
        .boundary_edges
        .iter()
        .map(|&(i, j, t)| (edge_key(i, j), t))
        .collect();
    let mut midpoint = |i: usize, j: usize, nodes: &mut Vec<Point>| -> Result<usize> {
        let key = edge_key(i, j);
        if let Some(&k) = mid.get(&key) {
            return Ok(k);
        }
        let mut p = (nodes[i] + nodes[j]) * 0.5;
        if let Some(tag) = tag_of.get(&key) {
            let curve = g
                .curve_for_tag(*tag)
                .ok_or_else(|| Error::Mesh(format!("edge tag {tag} absent from geometry")))?;
            p = curve.project(&p, ON_CURVE_TOL)?;
        }
        nodes.push(p);
        mid.insert(key, nodes.len() - 1);
        Ok(nodes.len() - 1)
    };
    let mut triangles = Vec::with_capacity(4 * m.triangles.len());
    for &[a, b, c] in &m.triangles {
        let ab = midpoint(a, b, &mut nodes)?;
        let bc = midpoint(b, c, &mut nodes)?;
        let ca = midpoint(c, a, &mut nodes)?;
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    let mut boundary_edges = Vec::with_capacity(2 * m.boundary_edges.len());
    for &(i, j, tag) in &m.boundary_edges {
        let k = mid[&edge_key(i, j)];
        boundary_edges.push((i, k, tag));
        boundary_edges.push((k, j, tag));
    }
    let out = Mesh {
        nodes,
        triangles,
        boundary_edges,
    };
    for t in 0..out.triangles.len() {
        if out.triangle_area(t) <= 0.0 {
            return Err(Error::Mesh(format!(
                "refinement inverted triangle {t}; base mesh too coarse near curved boundary"
            )));
        }
    }
    Ok(out)
}

/// `generate` followed by `levels` refinements.
pub fn generate_refined(g: &GeometryDesc, h0: f64, levels: usize) -> Result<Mesh> {
    let mut m = generate(g, h0)?;
    for _ in 0..levels {
        m = refine(&m, g)?;
    }
    Ok(m)
}

pub const MESH_HEADER: &str = "# spectral-ends mesh v1";

pub fn format_mesh(m: &Mesh) -> String {
    let mut s = String::with_capacity(64 * (m.nodes.len() + m.triangles.len()));
    let _ = writeln!(s, "{MESH_HEADER}");
    let _ = writeln!(s, "nodes {}", m.nodes.len());
    for p in &m.nodes {
        let _ = writeln!(s, "{:.16e} {:.16e}", p.x, p.y);
    }
    let _ = writeln!(s, "triangles {}", m.triangles.len());
    for t in &m.triangles {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "edges {}", m.boundary_edges.len());
    for e in &m.boundary_edges {
        let _ = writeln!(s, "{} {} {}", e.0, e.1, e.2);
    }
    s
}

pub fn write_mesh(m: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_mesh(m))?;
    Ok(())
}

/// Result of parsing a mesh file: the mesh and how many triangles had to be
/// reoriented to counter-clockwise.
#[derive(Debug)]
pub struct ReadMesh {
    pub mesh: Mesh,
    pub reoriented: usize,
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<ReadMesh> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

pub fn parse_mesh(text: &str) -> Result<ReadMesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let err = |line: usize, msg: String| Error::MeshParse { line, msg };
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines
            .next()
            .ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")))
    };
    let (ln, header) = next("header")?;
    if header != MESH_HEADER {
        return Err(err(ln, format!("expected header '{MESH_HEADER}'")));
    }
    fn count(ln: usize, line: &str, key: &str) -> Result<usize> {
        let mut it = line.split_whitespace();
        match (it.next(), it.next().map(str::parse::<usize>), it.next()) {
            (Some(k), Some(Ok(n)), None) if k == key => Ok(n),
            _ => Err(Error::MeshParse {
                line: ln,
                msg: format!("expected '{key} <count>'"),
            }),
        }
    }
    fn fields<T: std::str::FromStr>(ln: usize, line: &str, n: usize) -> Result<Vec<T>> {
        let v: Vec<T> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::MeshParse {
                line: ln,
                msg: format!("cannot parse '{line}'"),
            })?;
        if v.len() != n {
            return Err(Error::MeshParse {
                line: ln,
                msg: format!("expected {n} fields, found {}", v.len()),
            });
        }
        Ok(v)
    }

    let (ln, l) = next("nodes")?;
    let nn = count(ln, l, "nodes")?;
    let mut nodes = Vec::with_capacity(nn);
    for _ in 0..nn {
        let (ln, l) = next("node")?;
        let v: Vec<f64> = fields(ln, l, 2)?;
        nodes.push(Point::new(v[0], v[1]));
    }
    let (ln, l) = next("triangles")?;
    let nt = count(ln, l, "triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    let mut reoriented = 0;
    for _ in 0..nt {
        let (ln, l) = next("triangle")?;
        let v: Vec<usize> = fields(ln, l, 3)?;
        if let Some(bad) = v.iter().find(|&&i| i >= nn) {
            return Err(err(ln, format!("node index {bad} out of range (nodes {nn})")));
        }
        let area = signed_area(&nodes[v[0]], &nodes[v[1]], &nodes[v[2]]);
        if area == 0.0 {
            return Err(err(ln, "degenerate triangle".into()));
        }
        if area < 0.0 {
            reoriented += 1;
            triangles.push([v[0], v[2], v[1]]);
        } else {
            triangles.push([v[0], v[1], v[2]]);
        }
    }
    let (ln, l) = next("edges")?;
    let ne = count(ln, l, "edges")?;
    let mut boundary_edges = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (ln, l) = next("edge")?;
        let v: Vec<i64> = fields(ln, l, 3)?;
        if v[0] < 0 || v[1] < 0 || v[0] as usize >= nn || v[1] as usize >= nn {
            return Err(err(ln, format!("edge node index out of range (nodes {nn})")));
        }
        boundary_edges.push((v[0] as usize, v[1] as usize, v[2] as i32));
    }
    if let Some((ln, l)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(err(ln, format!("trailing content '{l}'")));
    }
    Ok(ReadMesh {
        mesh: Mesh {
            nodes,
            triangles,
            boundary_edges,
        },
        reoriented,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_preset, GeometryDesc};
    use std::collections::BTreeMap;

    fn preset(name: &str, kv: &[(&str, f64)]) -> GeometryDesc {
        let p: BTreeMap<String, f64> = kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        build_preset(name, &p).unwrap()
    }

    #[test]
    fn rect_test_structured() {
        let g = preset("rect-test", &[]);
        let m = generate(&g, 0.25).unwrap();
        assert_eq!(m.triangles.len(), 32);
        assert_eq!(m.nodes.len(), 25);
        assert_eq!(m.boundary_edges.len(), 16);
        m.check_tags(&g).unwrap();
        let r = refine(&m, &g).unwrap();
        assert_eq!(r.triangles.len(), 128);
        assert_eq!(r.nodes.len(), 81);
        r.check().unwrap();
    }

    #[test]
    fn presets_mesh_cleanly() {
        for (name, kv) in [
            ("bent-waveguide", vec![]),
            ("straight-waveguide", vec![]),
            ("obstructed-strip", vec![("delta", 0.2), ("radius", 0.5)]),
            ("cshape-cavity", vec![("eps", 0.2)]),
            ("gaussian-potential", vec![]),
        ] {
            let g = preset(name, &kv);
            let m = generate(&g, g.default_h0).unwrap();
            m.check().unwrap();
            m.check_tags(&g).unwrap();
            let a = m.min_angle_deg();
            assert!(a >= 20.0, "{name}: min angle {a}");
            let r = refine(&m, &g).unwrap();
            r.check().unwrap();
            r.check_tags(&g).unwrap();
        }
    }

    #[test]
    fn obstacle_excluded() {
        let g = preset("obstructed-strip", &[("delta", 0.0), ("radius", 0.3)]);
        let m = generate(&g, 0.1).unwrap();
        for p in &m.nodes {
            assert!(p.x * p.x + p.y * p.y >= 0.09 - 1e-9);
        }
    }

    #[test]
    fn obstructed_strip_mirror_symmetric() {
        let g = preset("obstructed-strip", &[("delta", 0.0), ("radius", 0.3)]);
        let m = refine(&generate(&g, g.default_h0).unwrap(), &g).unwrap();
        let mut pts: Vec<(u64, u64)> = m.nodes.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
        let mut mirrored: Vec<(u64, u64)> = m
            .nodes
            .iter()
            .map(|p| (p.x.to_bits(), (-p.y + 0.0).to_bits()))
            .collect();
        pts.sort_unstable();
        mirrored.sort_unstable();
        assert_eq!(pts, mirrored);
    }

    #[test]
    fn arc_projection_on_refine() {
        let g = preset("cshape-cavity", &[("eps", 0.2)]);
        let m = refine(&generate(&g, 0.1).unwrap(), &g).unwrap();
        for &(i, j, tag) in &m.boundary_edges {
            if let Some(Curve::Arc { center, radius, .. }) = g.curve_for_tag(tag) {
                for k in [i, j] {
                    assert!(((m.nodes[k] - center).norm() - radius).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn cshape_gap_resolved() {
        let g = preset("cshape-cavity", &[("eps", 0.2)]);
        let m = generate(&g, 0.05).unwrap();
        // Nodes strictly inside the barrier thickness along the opening.
        let inside = m
            .nodes
            .iter()
            .filter(|p| {
                let r = p.norm();
                r > 1.0 + 1e-9 && r < 1.1 - 1e-9 && p.x > 0.0 && p.y.abs() < 1e-9
            })
            .count();
        assert!(inside >= 1, "need >= 2 elements across the 0.1 barrier");
        assert!(m.min_angle_deg() >= 20.0);
    }

    #[test]
    fn round_trip() {
        let g = preset("rect-test", &[]);
        let m = refine(&generate(&g, 0.25).unwrap(), &g).unwrap();
        let back = parse_mesh(&format_mesh(&m)).unwrap();
        assert_eq!(back.reoriented, 0);
        assert_eq!(back.mesh, m);
    }

    #[test]
    fn parse_errors_name_line() {
        let text = "# spectral-ends mesh v1\nnodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 3\nedges 0\n";
        match parse_mesh(text) {
            Err(Error::MeshParse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
        let cw = "# spectral-ends mesh v1\nnodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 2 1\nedges 0\n";
        let r = parse_mesh(cw).unwrap();
        assert_eq!(r.reoriented, 1);
        assert_eq!(r.mesh.triangles[0], [0, 1, 2]);
    }
}
