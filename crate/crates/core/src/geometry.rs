//! Geometry of the truncated interior domain: boundary segments carrying
//! Robin coefficients, interfaces with cylindrical ends, and the optional
//! artificial circle used for exterior problems.
//!
//! Arcs are kept exact (center, radius, angles); resolution is the mesher's
//! business.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

/// Tag offset for interface edges: the interface of end `n` carries `100 + n`.
pub const INTERFACE_TAG_BASE: i32 = 100;

/// Tolerance used when chaining curve endpoints into closed loops.
pub const CLOSURE_TOL: f64 = 1e-12;

/// Robin boundary coefficients for `a u + b du/dn = 0`, normalized so that
/// `a^2 + b^2 = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobinCoeff {
    a: f64,
    b: f64,
}

impl RobinCoeff {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let norm = a.hypot(b);
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Geometry(format!(
                "Robin coefficients ({a}, {b}) cannot be normalized"
            )));
        }
        let (mut a, mut b) = (a / norm, b / norm);
        // Fix the overall sign so that b >= 0 (and a >= 0 when b = 0).
        if b < 0.0 || (b == 0.0 && a < 0.0) {
            a = -a;
            b = -b;
        }
        Ok(Self { a, b })
    }

    pub const fn dirichlet() -> Self {
        Self { a: 1.0, b: 0.0 }
    }

    pub const fn neumann() -> Self {
        Self { a: 0.0, b: 1.0 }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn is_dirichlet(&self) -> bool {
        self.b == 0.0
    }

    pub fn is_neumann(&self) -> bool {
        self.a == 0.0
    }

    /// Coefficient `a/b` of the boundary term in the quadratic form; zero for
    /// Neumann, undefined (None) for Dirichlet.
    pub fn robin_ratio(&self) -> Option<f64> {
        if self.is_dirichlet() {
            None
        } else {
            Some(self.a / self.b)
        }
    }
}

/// A boundary curve: straight segment or circular arc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Curve {
    Line {
        start: Point,
        end: Point,
    },
    /// Points `center + radius (cos t, sin t)` for `t` from `start_angle` to
    /// `start_angle + sweep`; a negative sweep runs clockwise.
    Arc {
        center: Point,
        radius: f64,
        start_angle: f64,
        sweep: f64,
    },
}

impl Curve {
    pub fn line(start: Point, end: Point) -> Self {
        Curve::Line { start, end }
    }

    pub fn arc(center: Point, radius: f64, start_angle: f64, sweep: f64) -> Self {
        Curve::Arc {
            center,
            radius,
            start_angle,
            sweep,
        }
    }

    pub fn circle(center: Point, radius: f64) -> Self {
        Curve::arc(center, radius, 0.0, 2.0 * PI)
    }

    pub fn length(&self) -> f64 {
        match *self {
            Curve::Line { start, end } => (end - start).norm(),
            Curve::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    pub fn is_closed(&self) -> bool {
        matches!(*self, Curve::Arc { sweep, .. } if (sweep.abs() - 2.0 * PI).abs() < 1e-14)
    }

    /// Point at normalized parameter `t` in `[0, 1]`.
    pub fn point_at(&self, t: f64) -> Point {
        match *self {
            Curve::Line { start, end } => start + (end - start) * t,
            Curve::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let th = start_angle + sweep * t;
                center + Point::new(th.cos(), th.sin()) * radius
            }
        }
    }

    pub fn start_point(&self) -> Point {
        self.point_at(0.0)
    }

    pub fn end_point(&self) -> Point {
        self.point_at(1.0)
    }

    /// Normalized parameter of `p` if it lies on the curve within `tol`.
    pub fn locate(&self, p: &Point, tol: f64) -> Option<f64> {
        match *self {
            Curve::Line { start, end } => {
                let d = end - start;
                let len2 = d.norm_squared();
                let t = (p - start).dot(&d) / len2;
                let len = len2.sqrt();
                if t < -tol / len || t > 1.0 + tol / len {
                    return None;
                }
                let foot = start + d * t.clamp(0.0, 1.0);
                ((p - foot).norm() <= tol).then_some(t.clamp(0.0, 1.0))
            }
            Curve::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let rel = p - center;
                if (rel.norm() - radius).abs() > tol {
                    return None;
                }
                let ang = rel.y.atan2(rel.x);
                let t = self.arc_param(ang, start_angle, sweep);
                let slack = tol / (radius * sweep.abs());
                if self.is_closed() {
                    return Some(t);
                }
                if t <= 1.0 + slack {
                    Some(t.min(1.0))
                } else if t >= 2.0 * PI / sweep.abs() - slack {
                    Some(0.0)
                } else {
                    None
                }
            }
        }
    }

    fn arc_param(&self, ang: f64, start_angle: f64, sweep: f64) -> f64 {
        let mut delta = if sweep >= 0.0 {
            ang - start_angle
        } else {
            start_angle - ang
        };
        delta = delta.rem_euclid(2.0 * PI);
        delta / sweep.abs()
    }

    /// Radial projection onto an arc (identity for lines). Fails when the
    /// projected point leaves the arc's angular range.
    pub fn project(&self, p: &Point, tol: f64) -> Result<Point> {
        match *self {
            Curve::Line { .. } => Ok(*p),
            Curve::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let rel = p - center;
                let r = rel.norm();
                if r == 0.0 {
                    return Err(Error::Mesh("cannot project arc center".into()));
                }
                let q = center + rel * (radius / r);
                if self.locate(&q, tol).is_none() {
                    let ang = rel.y.atan2(rel.x);
                    return Err(Error::Mesh(format!(
                        "projection at angle {ang:.6} leaves arc [{start_angle:.6}, {:.6}]",
                        start_angle + sweep
                    )));
                }
                Ok(q)
            }
        }
    }

    fn reflect_y(&self) -> Curve {
        match *self {
            Curve::Line { start, end } => Curve::Line {
                start: Point::new(start.x, -start.y),
                end: Point::new(end.x, -end.y),
            },
            Curve::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => Curve::Arc {
                center: Point::new(center.x, -center.y),
                radius,
                start_angle: -start_angle,
                sweep: -sweep,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySegment {
    pub curve: Curve,
    pub coeff: RobinCoeff,
    pub tag: i32,
}

/// A semi-infinite straight channel attached to the interior along
/// `attach_start -> attach_end`. Arclength `s` on the interface runs from
/// `attach_start` (`s = 0`) to `attach_end` (`s = width`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndDesc {
    pub attach_start: Point,
    pub attach_end: Point,
    pub width: f64,
    /// Coefficients on the side wall through `attach_start` and `attach_end`.
    pub side_coeffs: (RobinCoeff, RobinCoeff),
    pub outward_dir: Point,
}

impl EndDesc {
    fn new(
        attach_start: Point,
        attach_end: Point,
        side_coeffs: (RobinCoeff, RobinCoeff),
        outward_dir: Point,
    ) -> Self {
        Self {
            attach_start,
            attach_end,
            width: (attach_end - attach_start).norm(),
            side_coeffs,
            outward_dir: outward_dir.normalize(),
        }
    }

    pub fn curve(&self) -> Curve {
        Curve::line(self.attach_start, self.attach_end)
    }

    /// Arclength coordinate of a point on the interface.
    pub fn arclength(&self, p: &Point) -> f64 {
        let t = (self.attach_end - self.attach_start) / self.width;
        (p - self.attach_start).dot(&t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArtificialCircle {
    pub center: Point,
    pub radius: f64,
}

/// `q(x, y) = C * sum_j exp(-nu |p - p_j|^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPotential {
    pub amplitude: f64,
    pub decay: f64,
    pub centers: Vec<Point>,
}

impl GaussianPotential {
    pub fn eval(&self, p: &Point) -> f64 {
        self.centers
            .iter()
            .map(|c| (-self.decay * (p - c).norm_squared()).exp())
            .sum::<f64>()
            * self.amplitude
    }
}

/// How the mesher should decompose the domain into mapped blocks.
#[derive(Clone, Debug, PartialEq)]
pub enum Layout {
    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    /// Channel of constant width: straight leg, annular bend, straight leg.
    Channel {
        inner_radius: f64,
        outer_radius: f64,
        angle: f64,
        leg: f64,
    },
    /// Rectangle `[0, length] x [-1, 1]` minus a disc centred on `x = 0`.
    ObstructedStrip {
        delta: f64,
        radius: f64,
        length: f64,
    },
    /// Disc of radius `outer` around the origin, optionally with the C-shaped
    /// barrier between radii `inner` and `inner + thickness` opened on `|y| < eps`.
    Polar {
        outer: f64,
        barrier: Option<CBarrier>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CBarrier {
    pub inner: f64,
    pub thickness: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryDesc {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub segments: Vec<BoundarySegment>,
    pub ends: Vec<EndDesc>,
    pub artificial_circle: Option<ArtificialCircle>,
    pub potential: Option<GaussianPotential>,
    pub layout: Layout,
    /// Suggested base mesh size.
    pub default_h0: f64,
}

/// One row of [`boundary_table`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEntry {
    pub tag: i32,
    pub coeff: RobinCoeff,
    pub curve: Curve,
}

/// Interface descriptor: either a straight interface to a cylindrical end or
/// the artificial circle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Interface {
    End { index: usize, end: EndDesc },
    Circle(ArtificialCircle),
}

impl Interface {
    pub fn tag(&self) -> i32 {
        match self {
            Interface::End { index, .. } => INTERFACE_TAG_BASE + *index as i32,
            Interface::Circle(_) => INTERFACE_TAG_BASE,
        }
    }

    pub fn curve(&self) -> Curve {
        match self {
            Interface::End { end, .. } => end.curve(),
            Interface::Circle(c) => Curve::circle(c.center, c.radius),
        }
    }
}

impl GeometryDesc {
    pub fn interfaces(&self) -> Vec<Interface> {
        if let Some(c) = self.artificial_circle {
            vec![Interface::Circle(c)]
        } else {
            self.ends
                .iter()
                .enumerate()
                .map(|(index, end)| Interface::End { index, end: *end })
                .collect()
        }
    }

    /// Curve for a boundary tag (segment or interface).
    pub fn curve_for_tag(&self, tag: i32) -> Option<Curve> {
        if tag >= INTERFACE_TAG_BASE {
            self.interfaces()
                .into_iter()
                .find(|i| i.tag() == tag)
                .map(|i| i.curve())
        } else {
            self.segments.iter().find(|s| s.tag == tag).map(|s| s.curve)
        }
    }

    pub fn coeff_for_tag(&self, tag: i32) -> Option<RobinCoeff> {
        self.segments.iter().find(|s| s.tag == tag).map(|s| s.coeff)
    }

    pub fn has_dirichlet(&self) -> bool {
        self.segments.iter().any(|s| s.coeff.is_dirichlet())
    }

    /// Checks the structural invariants: normalized coefficients, positive
    /// curve lengths, distinct tags, closed boundary loops, and (for spectral
    /// runs) exactly one of ends / artificial circle.
    pub fn validate(&self, spectral: bool) -> Result<()> {
        let mut tags = std::collections::BTreeSet::new();
        for s in &self.segments {
            if s.tag >= INTERFACE_TAG_BASE || s.tag < 0 {
                return Err(Error::Geometry(format!(
                    "segment tag {} outside [0, {INTERFACE_TAG_BASE})",
                    s.tag
                )));
            }
            if !tags.insert(s.tag) {
                return Err(Error::Geometry(format!("duplicate tag {}", s.tag)));
            }
            if s.curve.length() <= 0.0 {
                return Err(Error::Geometry(format!("segment {} has zero length", s.tag)));
            }
            let n = s.coeff.a().powi(2) + s.coeff.b().powi(2);
            if (n - 1.0).abs() > 1e-14 {
                return Err(Error::Geometry(format!("segment {} not normalized", s.tag)));
            }
        }
        for e in &self.ends {
            if e.width <= 0.0 {
                return Err(Error::Geometry("end with non-positive width".into()));
            }
            let along = (e.attach_end - e.attach_start) / e.width;
            if along.dot(&e.outward_dir).abs() > 1e-12 {
                return Err(Error::Geometry("end direction not normal to interface".into()));
            }
        }
        if spectral && (self.ends.is_empty() == self.artificial_circle.is_none()) {
            return Err(Error::Geometry(
                "exactly one of cylindrical ends or artificial circle is required".into(),
            ));
        }
        check_closure(&self.all_curves())
    }

    fn all_curves(&self) -> Vec<Curve> {
        let mut curves: Vec<Curve> = self.segments.iter().map(|s| s.curve).collect();
        curves.extend(self.interfaces().iter().map(|i| i.curve()));
        curves
    }

    /// Area of the interior domain, exact for every layout.
    pub fn area(&self) -> f64 {
        match &self.layout {
            Layout::Rectangle { x0, x1, y0, y1 } => (x1 - x0) * (y1 - y0),
            Layout::Channel {
                inner_radius,
                outer_radius,
                angle,
                leg,
            } => {
                let w = outer_radius - inner_radius;
                0.5 * angle * (outer_radius.powi(2) - inner_radius.powi(2)) + 2.0 * leg * w
            }
            Layout::ObstructedStrip { radius, length, .. } => {
                2.0 * length - 0.5 * PI * radius * radius
            }
            Layout::Polar { outer, barrier } => {
                let mut a = PI * outer * outer;
                if let Some(b) = barrier {
                    let (r1, r2) = (b.inner, b.inner + b.thickness);
                    // Full annulus minus the opening between the two chords
                    // y = +-eps inside r1 < r < r2.
                    let annulus = PI * (r2 * r2 - r1 * r1);
                    let opening = strip_area_in_disc(r2, b.eps) - strip_area_in_disc(r1, b.eps);
                    a -= annulus - opening;
                }
                a
            }
        }
    }
}

/// Area of `{x > 0, |y| < eps, x^2 + y^2 < r^2}`.
fn strip_area_in_disc(r: f64, eps: f64) -> f64 {
    // integral_{-eps}^{eps} sqrt(r^2 - y^2) dy
    let f = |y: f64| 0.5 * (y * (r * r - y * y).sqrt() + r * r * (y / r).asin());
    f(eps) - f(-eps)
}

/// Verifies that curves chain into closed loops: every open curve endpoint
/// coincides with exactly one other open-curve endpoint.
pub fn check_closure(curves: &[Curve]) -> Result<()> {
    let mut pts = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        if c.is_closed() {
            continue;
        }
        pts.push((i, c.start_point()));
        pts.push((i, c.end_point()));
    }
    for (k, (ci, p)) in pts.iter().enumerate() {
        let matches = pts
            .iter()
            .enumerate()
            .filter(|(l, (cj, q))| *l != k && cj != ci && (p - q).norm() <= CLOSURE_TOL)
            .count();
        if matches != 1 {
            return Err(Error::Geometry(format!(
                "boundary not closed at ({:.6}, {:.6}): {matches} matching endpoints",
                p.x, p.y
            )));
        }
    }
    Ok(())
}

/// Every Γ₀ segment exactly once, as `(tag, coefficients, curve)`.
pub fn boundary_table(g: &GeometryDesc) -> Vec<BoundaryEntry> {
    g.segments
        .iter()
        .map(|s| BoundaryEntry {
            tag: s.tag,
            coeff: s.coeff,
            curve: s.curve,
        })
        .collect()
}

/// Named preset geometries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    BentWaveguide,
    StraightWaveguide,
    ObstructedStrip,
    CShapeCavity,
    GaussianPotential,
    RectTest,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::BentWaveguide,
        Preset::StraightWaveguide,
        Preset::ObstructedStrip,
        Preset::CShapeCavity,
        Preset::GaussianPotential,
        Preset::RectTest,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::BentWaveguide => "bent-waveguide",
            Preset::StraightWaveguide => "straight-waveguide",
            Preset::ObstructedStrip => "obstructed-strip",
            Preset::CShapeCavity => "cshape-cavity",
            Preset::GaussianPotential => "gaussian-potential",
            Preset::RectTest => "rect-test",
        }
    }

    /// Parameter names accepted by the preset and their defaults.
    pub fn defaults(&self) -> &'static [(&'static str, f64)] {
        match self {
            Preset::BentWaveguide => &[("angle", FRAC_PI_4), ("leg", 0.5)],
            Preset::StraightWaveguide => &[("leg", 0.5)],
            Preset::ObstructedStrip => &[
                ("delta", 0.0),
                ("radius", 0.3),
                ("length", 1.0),
                ("symmetry", 0.0),
            ],
            Preset::CShapeCavity => &[("eps", 0.2), ("rart", 1.5)],
            Preset::GaussianPotential => &[("rart", 4.0), ("amplitude", 40.0), ("decay", 2.0)],
            Preset::RectTest => &[],
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Geometry(format!("unknown preset '{s}'")))
    }
}

/// Builds a preset geometry. Unknown parameter names are rejected; missing
/// ones take the preset defaults.
pub fn build_preset(name: &str, params: &BTreeMap<String, f64>) -> Result<GeometryDesc> {
    let preset: Preset = name.parse()?;
    let mut p: BTreeMap<String, f64> = preset
        .defaults()
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    for (k, v) in params {
        if !p.contains_key(k) {
            return Err(Error::Geometry(format!(
                "parameter '{k}' is not accepted by preset '{name}'"
            )));
        }
        if !v.is_finite() {
            return Err(Error::Geometry(format!("parameter '{k}' is not finite")));
        }
        p.insert(k.clone(), *v);
    }
    let g = match preset {
        Preset::RectTest => rect_test(),
        Preset::BentWaveguide => channel(p["angle"], p["leg"])?,
        Preset::StraightWaveguide => channel(0.0, p["leg"])?,
        Preset::ObstructedStrip => {
            obstructed_strip(p["delta"], p["radius"], p["length"], p["symmetry"])?
        }
        Preset::CShapeCavity => cshape(p["eps"], p["rart"])?,
        Preset::GaussianPotential => gaussian(p["rart"], p["amplitude"], p["decay"])?,
    };
    let g = GeometryDesc {
        name: preset.name().to_string(),
        params: p,
        ..g
    };
    g.validate(true)?;
    Ok(g)
}

fn pt(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

fn seg(curve: Curve, coeff: RobinCoeff, tag: i32) -> BoundarySegment {
    BoundarySegment { curve, coeff, tag }
}

fn blank(layout: Layout, default_h0: f64) -> GeometryDesc {
    GeometryDesc {
        name: String::new(),
        params: BTreeMap::new(),
        segments: Vec::new(),
        ends: Vec::new(),
        artificial_circle: None,
        potential: None,
        layout,
        default_h0,
    }
}

/// Unit square with Dirichlet walls at `y = 0, 1`, Neumann at `x = 0` and the
/// interface at `x = 1`.
fn rect_test() -> GeometryDesc {
    let d = RobinCoeff::dirichlet();
    let mut g = blank(
        Layout::Rectangle {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        },
        0.25,
    );
    g.segments = vec![
        seg(Curve::line(pt(0.0, 0.0), pt(1.0, 0.0)), d, 1),
        seg(Curve::line(pt(1.0, 1.0), pt(0.0, 1.0)), d, 2),
        seg(Curve::line(pt(0.0, 1.0), pt(0.0, 0.0)), RobinCoeff::neumann(), 3),
    ];
    g.ends = vec![EndDesc::new(pt(1.0, 0.0), pt(1.0, 1.0), (d, d), pt(1.0, 0.0))];
    g
}

/// Axis-aligned rectangle with a single coefficient on all four sides and no
/// ends; useful for interior eigenvalue checks.
pub fn closed_rectangle(x1: f64, y1: f64, coeff: RobinCoeff) -> GeometryDesc {
    let mut g = blank(
        Layout::Rectangle {
            x0: 0.0,
            x1,
            y0: 0.0,
            y1,
        },
        0.25,
    );
    g.name = "closed-rectangle".into();
    let c = [pt(0.0, 0.0), pt(x1, 0.0), pt(x1, y1), pt(0.0, y1)];
    g.segments = (0..4)
        .map(|i| seg(Curve::line(c[i], c[(i + 1) % 4]), coeff, i as i32 + 1))
        .collect();
    g
}

/// Waveguide of width 1 bent through `angle` (inner radius 1, outer radius
/// 2), with straight legs of length `leg` on both sides. Dirichlet on the
/// inner wall, Neumann on the outer wall.
fn channel(angle: f64, leg: f64) -> Result<GeometryDesc> {
    if !(0.0..=FRAC_PI_2).contains(&angle) {
        return Err(Error::Geometry(format!("bend angle {angle} outside [0, pi/2]")));
    }
    if leg <= 0.0 {
        return Err(Error::Geometry(format!("leg length {leg} must be positive")));
    }
    let (ri, ro) = (1.0, 2.0);
    let d = RobinCoeff::dirichlet();
    let n = RobinCoeff::neumann();
    let th0 = -FRAC_PI_2;
    let th1 = th0 + angle;
    let radial = |th: f64, r: f64| pt(r * th.cos(), r * th.sin());
    let tangent = pt(-th1.sin(), th1.cos());

    let mut g = blank(
        Layout::Channel {
            inner_radius: ri,
            outer_radius: ro,
            angle,
            leg,
        },
        1.0 / 3.0,
    );
    let left_in = pt(-leg, -ri);
    let left_out = pt(-leg, -ro);
    let right_in = radial(th1, ri) + tangent * leg;
    let right_out = radial(th1, ro) + tangent * leg;

    let mut segs = Vec::new();
    if angle > 0.0 {
        segs.push(seg(Curve::line(left_in, radial(th0, ri)), d, 1));
        segs.push(seg(Curve::arc(pt(0.0, 0.0), ri, th0, angle), d, 2));
        segs.push(seg(Curve::line(radial(th1, ri), right_in), d, 3));
        segs.push(seg(Curve::line(right_out, radial(th1, ro)), n, 4));
        segs.push(seg(Curve::arc(pt(0.0, 0.0), ro, th1, -angle), n, 5));
        segs.push(seg(Curve::line(radial(th0, ro), left_out), n, 6));
    } else {
        segs.push(seg(Curve::line(left_in, right_in), d, 1));
        segs.push(seg(Curve::line(right_out, left_out), n, 4));
    }
    g.segments = segs;
    g.ends = vec![
        EndDesc::new(left_in, left_out, (d, n), pt(-1.0, 0.0)),
        EndDesc::new(right_in, right_out, (d, n), tangent),
    ];
    Ok(g)
}

/// Half strip `0 < x < length, |y| < 1` minus the disc of radius `radius`
/// centred at `(0, delta)`. Walls and obstacle are Neumann (acoustically
/// hard). `symmetry` selects the condition on the cut `x = 0`: 0 for
/// Neumann (even in x), 1 for Dirichlet (odd in x).
fn obstructed_strip(delta: f64, radius: f64, length: f64, symmetry: f64) -> Result<GeometryDesc> {
    if radius <= 0.0 || delta.abs() + radius >= 1.0 {
        return Err(Error::Geometry(format!(
            "obstacle (delta = {delta}, R = {radius}) must satisfy R > 0 and |delta| + R < 1"
        )));
    }
    if length <= radius {
        return Err(Error::Geometry(format!(
            "truncation length {length} must exceed the obstacle radius"
        )));
    }
    let cut = if symmetry == 0.0 {
        RobinCoeff::neumann()
    } else if symmetry == 1.0 {
        RobinCoeff::dirichlet()
    } else {
        return Err(Error::Geometry(format!(
            "symmetry flag {symmetry} must be 0 (Neumann) or 1 (Dirichlet)"
        )));
    };
    let n = RobinCoeff::neumann();
    let mut g = blank(
        Layout::ObstructedStrip {
            delta,
            radius,
            length,
        },
        1.0 / 3.0,
    );
    g.segments = vec![
        seg(Curve::line(pt(0.0, -1.0), pt(length, -1.0)), n, 1),
        seg(Curve::line(pt(length, 1.0), pt(0.0, 1.0)), n, 2),
        seg(Curve::line(pt(0.0, 1.0), pt(0.0, delta + radius)), cut, 3),
        seg(Curve::arc(pt(0.0, delta), radius, FRAC_PI_2, -PI), n, 4),
        seg(Curve::line(pt(0.0, delta - radius), pt(0.0, -1.0)), cut, 5),
    ];
    g.ends = vec![EndDesc::new(
        pt(length, -1.0),
        pt(length, 1.0),
        (n, n),
        pt(1.0, 0.0),
    )];
    Ok(g)
}

/// Disc of radius `rart` containing the C-shaped Dirichlet barrier between
/// arcs through `(1, +-eps)` and `(1.1, +-eps)` centred at the origin, open
/// on `|y| < eps` at positive x, so the opening faces are the horizontal
/// segments from `x = 1` to `x = 1.1`.
fn cshape(eps: f64, rart: f64) -> Result<GeometryDesc> {
    let (r1, r2) = ((1.0 + eps * eps).sqrt(), (1.21 + eps * eps).sqrt());
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Geometry(format!("eps = {eps} must lie in (0, 1)")));
    }
    if rart <= r2 {
        return Err(Error::Geometry(format!(
            "artificial radius {rart} must exceed the obstacle extent {r2}"
        )));
    }
    let d = RobinCoeff::dirichlet();
    let tp = (eps / r1).asin();
    let tq = (eps / r2).asin();
    let mut g = blank(
        Layout::Polar {
            outer: rart,
            barrier: Some(CBarrier {
                inner: r1,
                thickness: r2 - r1,
                eps,
            }),
        },
        0.2,
    );
    let p = pt(r1 * tp.cos(), eps);
    let s = pt(r1 * tp.cos(), -eps);
    let q = pt(r2 * tq.cos(), eps);
    let r = pt(r2 * tq.cos(), -eps);
    g.segments = vec![
        seg(Curve::arc(pt(0.0, 0.0), r1, tp, 2.0 * PI - 2.0 * tp), d, 1),
        seg(Curve::line(s, r), d, 2),
        seg(Curve::arc(pt(0.0, 0.0), r2, -tq, -(2.0 * PI - 2.0 * tq)), d, 3),
        seg(Curve::line(q, p), d, 4),
    ];
    g.artificial_circle = Some(ArtificialCircle {
        center: pt(0.0, 0.0),
        radius: rart,
    });
    Ok(g)
}

/// Whole disc of radius `rart` with three Gaussian bumps on the unit circle.
fn gaussian(rart: f64, amplitude: f64, decay: f64) -> Result<GeometryDesc> {
    if rart <= 1.0 {
        return Err(Error::Geometry(format!(
            "artificial radius {rart} must enclose the potential centres on the unit circle"
        )));
    }
    if decay <= 0.0 {
        return Err(Error::Geometry(format!("decay {decay} must be positive")));
    }
    let (s3, c3) = (PI / 3.0).sin_cos();
    let mut g = blank(
        Layout::Polar {
            outer: rart,
            barrier: None,
        },
        0.6,
    );
    g.artificial_circle = Some(ArtificialCircle {
        center: pt(0.0, 0.0),
        radius: rart,
    });
    g.potential = Some(GaussianPotential {
        amplitude,
        decay,
        centers: vec![pt(0.0, -1.0), pt(s3, c3), pt(-s3, c3)],
    });
    Ok(g)
}

/// Mirror image of the segment list under `y -> -y`, for symmetry checks.
pub fn reflect_segments_y(segments: &[BoundarySegment]) -> Vec<BoundarySegment> {
    segments
        .iter()
        .map(|s| BoundarySegment {
            curve: s.curve.reflect_y(),
            ..*s
        })
        .collect()
}
