//! Cross-section eigenpairs: closed forms on an interval with Robin ends,
//! and the Fourier basis on an artificial circle.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{GeometryDesc, Interface, Point, RobinCoeff};

/// Default number of transverse modes per interface.
pub const DEFAULT_M: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransverseKind {
    Interval { length: f64 },
    Circle { radius: f64 },
}

/// One interval eigenfunction `w(s) = c (p cos(k s) + q sin(k s))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalMode {
    pub k: f64,
    pub p: f64,
    pub q: f64,
    pub scale: f64,
}

impl IntervalMode {
    pub fn eval(&self, s: f64) -> f64 {
        self.scale * (self.p * (self.k * s).cos() + self.q * (self.k * s).sin())
    }

    pub fn deriv(&self, s: f64) -> f64 {
        self.scale * self.k * (-self.p * (self.k * s).sin() + self.q * (self.k * s).cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Interval(IntervalMode),
    /// `e^{i n theta} / sqrt(2 pi rho)`.
    Fourier { order: i32, radius: f64 },
}

#[derive(Clone, Debug)]
pub struct TransverseBasis {
    /// Thresholds for intervals; `n^2 / rho^2` for the circle (informational).
    pub kappa: Vec<f64>,
    pub modes: Vec<Mode>,
    pub end_index: usize,
    pub kind: TransverseKind,
}

/// Robin condition `a w + b dw/dn = 0` with outward normal `-s` at `s = 0`
/// and `+s` at `s = L`.
pub fn interval_basis(length: f64, left: RobinCoeff, right: RobinCoeff, m: usize) -> Result<TransverseBasis> {
    if !(length > 0.0) || m == 0 {
        return Err(Error::Transverse(format!(
            "interval basis needs L > 0 and M >= 1 (L = {length}, M = {m})"
        )));
    }
    let l = length;
    let mut modes = Vec::with_capacity(m);
    let mut kappa = Vec::with_capacity(m);
    let sqrt2l = (2.0 / l).sqrt();
    for j in 1..=m {
        let jf = j as f64;
        let mode = match (left.is_dirichlet(), right.is_dirichlet(), left.is_neumann(), right.is_neumann()) {
            (true, true, _, _) => IntervalMode { k: jf * PI / l, p: 0.0, q: 1.0, scale: sqrt2l },
            (true, _, _, true) => IntervalMode { k: (jf - 0.5) * PI / l, p: 0.0, q: 1.0, scale: sqrt2l },
            (_, true, true, _) => IntervalMode { k: (jf - 0.5) * PI / l, p: 1.0, q: 0.0, scale: sqrt2l },
            (_, _, true, true) => {
                if j == 1 {
                    IntervalMode { k: 0.0, p: 1.0, q: 0.0, scale: 1.0 / l.sqrt() }
                } else {
                    IntervalMode { k: (jf - 1.0) * PI / l, p: 1.0, q: 0.0, scale: sqrt2l }
                }
            }
            _ => robin_mode(l, left, right, j)?,
        };
        kappa.push(mode.k * mode.k);
        modes.push(Mode::Interval(mode));
    }
    Ok(TransverseBasis {
        kappa,
        modes,
        end_index: 0,
        kind: TransverseKind::Interval { length },
    })
}

/// General Robin mode: `w = b_l k cos(ks) + a_l sin(ks)` satisfies the left
/// condition; the right condition gives the characteristic function.
fn robin_mode(l: f64, left: RobinCoeff, right: RobinCoeff, j: usize) -> Result<IntervalMode> {
    let (al, bl, ar, br) = (left.a(), left.b(), right.a(), right.b());
    if al * bl < 0.0 || ar * br < 0.0 {
        return Err(Error::Transverse(
            "Robin coefficients with a/b < 0 admit negative thresholds; unsupported".into(),
        ));
    }
    let f = |k: f64| {
        let (c, s) = ((k * l).cos(), (k * l).sin());
        ar * (bl * k * c + al * s) + br * (-bl * k * k * s + al * k * c)
    };
    // With a/b >= 0 on both ends, the j-th root lies in ((j-1) pi/L, j pi/L].
    let (mut lo, mut hi) = ((j as f64 - 1.0) * PI / l, j as f64 * PI / l);
    lo += 1e-14 * hi;
    let (mut flo, fhi) = (f(lo), f(hi));
    if fhi == 0.0 {
        lo = hi;
    } else {
        if flo * fhi > 0.0 {
            return Err(Error::Transverse(format!(
                "Robin root bracket exhausted for mode {j}"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid);
            if fm == 0.0 || hi - lo <= 1e-15 * hi {
                lo = mid;
                hi = mid;
                break;
            }
            if (fm < 0.0) == (flo < 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
    }
    let k = 0.5 * (lo + hi);
    let (p, q) = (bl * k, al);
    // Normalize in closed form: int_0^L (p cos + q sin)^2.
    let (s2, c2) = ((2.0 * k * l).sin(), (2.0 * k * l).cos());
    let norm2 = if k == 0.0 {
        p * p * l
    } else {
        0.5 * (p * p + q * q) * l + (p * p - q * q) * s2 / (4.0 * k) + p * q * (1.0 - c2) / (2.0 * k)
    };
    Ok(IntervalMode {
        k,
        p,
        q,
        scale: 1.0 / norm2.sqrt(),
    })
}

/// Fourier modes in the order `0, 1, -1, 2, -2, ...`.
pub fn circle_basis(radius: f64, m: usize) -> Result<TransverseBasis> {
    if !(radius > 0.0) {
        return Err(Error::Transverse(format!("circle radius {radius} must be positive")));
    }
    if m % 2 == 0 {
        return Err(Error::Transverse(format!("circle basis size M = {m} must be odd")));
    }
    let orders: Vec<i32> = (0..m as i32)
        .map(|k| if k % 2 == 1 { (k + 1) / 2 } else { -(k / 2) })
        .collect();
    Ok(TransverseBasis {
        kappa: orders.iter().map(|&n| (n as f64 / radius).powi(2)).collect(),
        modes: orders
            .iter()
            .map(|&order| Mode::Fourier { order, radius })
            .collect(),
        end_index: 0,
        kind: TransverseKind::Circle { radius },
    })
}

impl TransverseBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Fourier orders (circle kind only).
    pub fn orders(&self) -> Vec<i32> {
        self.modes
            .iter()
            .filter_map(|m| match m {
                Mode::Fourier { order, .. } => Some(*order),
                _ => None,
            })
            .collect()
    }
}

/// A transverse mode in the global ordering across interfaces.
#[derive(Clone, Copy, Debug)]
pub struct GlobalMode {
    pub interface: usize,
    pub local: usize,
    pub kappa: f64,
    pub mode: Mode,
    /// Tag of the interface edges this mode lives on.
    pub tag: i32,
    geometry: InterfaceMap,
}

#[derive(Clone, Copy, Debug)]
enum InterfaceMap {
    Line { start: Point, dir: Point },
    Circle { center: Point },
}

impl GlobalMode {
    /// Value at a physical point on the interface.
    pub fn eval_at(&self, p: &Point) -> Complex64 {
        match (self.mode, self.geometry) {
            (Mode::Interval(m), InterfaceMap::Line { start, dir }) => {
                Complex64::new(m.eval((p - start).dot(&dir)), 0.0)
            }
            (Mode::Fourier { order, radius }, InterfaceMap::Circle { center }) => {
                let rel = p - center;
                let th = rel.y.atan2(rel.x);
                Complex64::from_polar(1.0 / (2.0 * PI * radius).sqrt(), order as f64 * th)
            }
            _ => unreachable!("mode kind matches interface kind by construction"),
        }
    }

    pub fn order(&self) -> Option<i32> {
        match self.mode {
            Mode::Fourier { order, .. } => Some(order),
            _ => None,
        }
    }
}

/// Per-interface bases and their merge sorted by threshold.
#[derive(Clone, Debug)]
pub struct GlobalBasis {
    pub per_interface: Vec<TransverseBasis>,
    pub modes: Vec<GlobalMode>,
    pub is_circle: bool,
}

impl GlobalBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn kappa(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.kappa).collect()
    }

    /// `#{kappa_j <= lambda}`: multiplicity of the essential spectrum.
    pub fn multiplicity(&self, lambda: f64) -> usize {
        self.modes.iter().filter(|m| m.kappa <= lambda).count()
    }

    /// Window index `J` with `kappa_J <= lambda < kappa_{J+1}`.
    pub fn window_of(&self, lambda: f64) -> usize {
        self.multiplicity(lambda)
    }
}

/// `m` modes per interface; for the circle `m` is the total (odd) count.
pub fn global_basis(g: &GeometryDesc, m: usize) -> Result<GlobalBasis> {
    let mut per = Vec::new();
    let mut modes = Vec::new();
    let mut is_circle = false;
    for (idx, iface) in g.interfaces().iter().enumerate() {
        let (mut basis, map) = match iface {
            Interface::End { end, .. } => {
                let b = interval_basis(end.width, end.side_coeffs.0, end.side_coeffs.1, m)?;
                let dir = (end.attach_end - end.attach_start) / end.width;
                (b, InterfaceMap::Line { start: end.attach_start, dir })
            }
            Interface::Circle(c) => {
                is_circle = true;
                (circle_basis(c.radius, m)?, InterfaceMap::Circle { center: c.center })
            }
        };
        basis.end_index = idx;
        for (local, (mode, kappa)) in basis.modes.iter().zip(&basis.kappa).enumerate() {
            modes.push(GlobalMode {
                interface: idx,
                local,
                kappa: *kappa,
                mode: *mode,
                tag: iface.tag(),
                geometry: map,
            });
        }
        per.push(basis);
    }
    if modes.is_empty() {
        return Err(Error::Transverse("geometry has no interface".into()));
    }
    if !is_circle {
        // Stable sort keeps per-interface order among equal thresholds.
        modes.sort_by(|a, b| a.kappa.total_cmp(&b.kappa));
    }
    Ok(GlobalBasis {
        per_interface: per,
        modes,
        is_circle,
    })
}
