//! γ-metric projections onto half-spaces and onto the intersection of two.
//!
//! Candidate acceptance is two-tiered. A candidate is first tested at rounding
//! level (residual within `1e-14` of the magnitude of the terms that produced
//! it); only if no candidate passes is the looser scaled tolerance `τ_feas`
//! used. Accepting the `W` corner with a loose absolute tolerance freezes the
//! iterates once `φ(pᵏ)` drops below it, so the loose tier is a fallback only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::product_space::{GammaMetric, ProductPoint};
use crate::separator::Separator;

/// `τ_feas` before scaling.
pub const FEAS_TOL: f64 = 1e-9;
const TIGHT_TOL: f64 = 1e-14;
const MULT_TOL: f64 = 1e-12;
const GRAM_TOL: f64 = 1e-14;

/// `{p : ⟨normal, p⟩_γ + offset ≤ 0}`
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: ProductPoint,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: ProductPoint, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// `Hₖ = {φ ≤ 0}`
    pub fn from_separator(s: &Separator) -> Self {
        Self::new(s.gradient().clone(), s.constant())
    }

    /// `Wₖ = {⟨p⁰ − pᵏ, p − pᵏ⟩_γ ≤ 0}`
    pub fn anchor(p0: &ProductPoint, pk: &ProductPoint, m: &GammaMetric) -> Self {
        let a = p0.sub(pk);
        let offset = -m.inner_unchecked(&a, pk);
        Self::new(a, offset)
    }

    pub fn value(&self, p: &ProductPoint, m: &GammaMetric) -> f64 {
        m.inner_unchecked(&self.normal, p) + self.offset
    }

    /// Magnitude of the terms in [`Self::value`]; its rounding error is a small multiple of this.
    fn magnitude(&self, p: &ProductPoint, m: &GammaMetric) -> f64 {
        m.norm(&self.normal) * m.norm(p) + self.offset.abs()
    }

    fn loose_tol(&self, p0: &ProductPoint, m: &GammaMetric) -> f64 {
        FEAS_TOL * (1.0 + m.norm(&self.normal)) * (1.0 + m.norm(p0))
    }

    pub fn contains(&self, p: &ProductPoint, m: &GammaMetric, tol: f64) -> bool {
        self.value(p, m) <= tol
    }

    fn is_degenerate(&self, m: &GammaMetric) -> bool {
        m.norm_sq(&self.normal) == 0.0
    }
}

pub fn project_halfspace(p: &ProductPoint, h: &HalfSpace, m: &GammaMetric) -> Result<ProductPoint> {
    p.check_compatible(&h.normal)?;
    let v = h.value(p, m);
    if v <= 0.0 {
        return Ok(p.clone());
    }
    let nn = m.norm_sq(&h.normal);
    if nn == 0.0 {
        return Err(Error::EmptyHalfSpace { offset: h.offset });
    }
    Ok(p.add_scaled(-v / nn, &h.normal))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionCase {
    /// The anchor itself was feasible.
    Interior,
    /// Only the first constraint is active.
    First,
    /// Only the second constraint is active.
    Second,
    /// Both constraints active.
    Both,
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub point: ProductPoint,
    pub case: ProjectionCase,
    /// False when only the loose fallback tolerance admitted the result.
    pub tight: bool,
}

struct Candidate {
    point: ProductPoint,
    case: ProjectionCase,
    tight: bool,
    loose: bool,
}

/// Projection of `p` onto `h1 ∩ h2` by enumerating active sets.
///
/// `second_proj` may supply the known projection of `p` onto `h2` (for `Wₖ` it
/// is `pᵏ` exactly). A degenerate half-space with nonpositive offset is treated
/// as the whole space.
pub fn project_onto_pair(
    p: &ProductPoint,
    h1: &HalfSpace,
    h2: &HalfSpace,
    m: &GammaMetric,
    second_proj: Option<&ProductPoint>,
) -> std::result::Result<Projection, String> {
    for h in [h1, h2] {
        if h.is_degenerate(m) && h.offset > 0.0 {
            return Err(format!("degenerate half-space with offset {:e} is empty", h.offset));
        }
    }
    let both_ok = |q: &ProductPoint| -> (bool, bool) {
        let mut tight = true;
        let mut loose = true;
        for h in [h1, h2] {
            if h.is_degenerate(m) {
                continue;
            }
            let v = h.value(q, m);
            tight &= v <= TIGHT_TOL * h.magnitude(q, m);
            loose &= v <= h.loose_tol(p, m);
        }
        (tight, loose)
    };
    let mut cands: Vec<Candidate> = Vec::with_capacity(4);
    let mut push = |point: ProductPoint, case| {
        let (tight, loose) = both_ok(&point);
        cands.push(Candidate {
            point,
            case,
            tight,
            loose,
        });
    };

    let v1 = h1.value(p, m);
    let v2 = h2.value(p, m);
    if v1 <= 0.0 && v2 <= 0.0 {
        return Ok(Projection {
            point: p.clone(),
            case: ProjectionCase::Interior,
            tight: true,
        });
    }

    let g11 = m.norm_sq(&h1.normal);
    let g22 = m.norm_sq(&h2.normal);
    if g11 > 0.0 {
        push(p.add_scaled(-v1.max(0.0) / g11, &h1.normal), ProjectionCase::First);
    }
    if g22 > 0.0 {
        let q = match second_proj {
            Some(q) if v2 > 0.0 => q.clone(),
            _ => p.add_scaled(-v2.max(0.0) / g22, &h2.normal),
        };
        push(q, ProjectionCase::Second);
    }
    if g11 > 0.0 && g22 > 0.0 {
        let g12 = m.inner_unchecked(&h1.normal, &h2.normal);
        let det = g11 * g22 - g12 * g12;
        if det > GRAM_TOL * g11 * g22 {
            let mu = (v1 * g22 - g12 * v2) / det;
            let nu = (g11 * v2 - g12 * v1) / det;
            let mtol = MULT_TOL * (1.0 + mu.abs().max(nu.abs()));
            if mu >= -mtol && nu >= -mtol {
                let point = p.add_scaled(-mu, &h1.normal).add_scaled(-nu, &h2.normal);
                // Both constraints hold with equality by construction.
                let (_, loose) = both_ok(&point);
                cands.push(Candidate {
                    point,
                    case: ProjectionCase::Both,
                    tight: true,
                    loose,
                });
            }
        }
    }

    let pick = |tight: bool| {
        cands
            .iter()
            .filter(|c| if tight { c.tight } else { c.loose })
            .min_by(|a, b| {
                m.distance(&a.point, p)
                    .partial_cmp(&m.distance(&b.point, p))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    };
    if let Some(c) = pick(true) {
        return Ok(Projection {
            point: c.point.clone(),
            case: c.case,
            tight: true,
        });
    }
    if let Some(c) = pick(false) {
        return Ok(Projection {
            point: c.point.clone(),
            case: c.case,
            tight: false,
        });
    }
    Err(format!(
        "no candidate among {} passed: h1(p) = {v1:e}, h2(p) = {v2:e}",
        cands.len()
    ))
}

/// `P_{Hₖ ∩ Wₖ}(p⁰)`.
///
/// `k` is only used to label errors.
pub fn project_p0_onto_intersection(
    p0: &ProductPoint,
    pk: &ProductPoint,
    s: &Separator,
    m: &GammaMetric,
    k: usize,
) -> Result<Projection> {
    p0.check_compatible(pk)?;
    p0.check_compatible(s.gradient())?;
    let h = HalfSpace::from_separator(s);
    let w = HalfSpace::anchor(p0, pk, m);
    project_onto_pair(p0, &h, &w, m, Some(pk)).map_err(|detail| Error::InfeasibleProjection { k, detail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product_space::Vector;

    // ℝ² embedded as (z, w₁) with one coordinate each.
    fn pt(x: f64, y: f64) -> ProductPoint {
        ProductPoint::new(Vector::from_vec(vec![x]), vec![Vector::from_vec(vec![y])])
    }

    #[test]
    fn halfspace_examples() {
        let m = GammaMetric::default();
        let one_d = |x: f64| ProductPoint::new(Vector::from_vec(vec![x]), vec![]);
        let h = HalfSpace::new(one_d(1.0), 0.0);
        assert_eq!(project_halfspace(&one_d(2.0), &h, &m).unwrap(), one_d(0.0));
        assert_eq!(project_halfspace(&one_d(-1.0), &h, &m).unwrap(), one_d(-1.0));

        // φ(p) = 1 − p_y
        let h = HalfSpace::new(pt(0.0, -1.0), 1.0);
        assert_eq!(project_halfspace(&pt(0.0, 0.0), &h, &m).unwrap(), pt(0.0, 1.0));
    }

    #[test]
    fn empty_degenerate_halfspace() {
        let m = GammaMetric::default();
        let h = HalfSpace::new(pt(0.0, 0.0), 1.0);
        assert!(matches!(
            project_halfspace(&pt(0.0, 0.0), &h, &m),
            Err(Error::EmptyHalfSpace { .. })
        ));
        let whole = HalfSpace::new(pt(0.0, 0.0), -1.0);
        assert_eq!(project_halfspace(&pt(3.0, 4.0), &whole, &m).unwrap(), pt(3.0, 4.0));
    }

    #[test]
    fn corner_projection() {
        let m = GammaMetric::default();
        let p0 = pt(0.0, 0.0);
        let pk = pt(1.0, 0.0);
        let h = HalfSpace::new(pt(0.0, -1.0), 1.0);
        let w = HalfSpace::anchor(&p0, &pk, &m);
        let r = project_onto_pair(&p0, &h, &w, &m, Some(&pk)).unwrap();
        assert_eq!(r.case, ProjectionCase::Both);
        assert!(m.distance(&r.point, &pt(1.0, 1.0)) < 1e-15);
    }

    #[test]
    fn w_corner_when_pk_in_h() {
        let m = GammaMetric::default();
        let p0 = pt(0.0, 0.0);
        let pk = pt(1.0, 2.0);
        // p_y ≥ 1 excludes p⁰ but contains pᵏ, whose W-projection is optimal.
        let h = HalfSpace::new(pt(0.0, -1.0), 1.0);
        let w = HalfSpace::anchor(&p0, &pk, &m);
        let r = project_onto_pair(&p0, &h, &w, &m, Some(&pk)).unwrap();
        assert_eq!(r.case, ProjectionCase::Second);
        assert_eq!(r.point, pk);
    }

    #[test]
    fn whole_w_at_start() {
        let m = GammaMetric::new(2.0).unwrap();
        let p0 = pt(0.5, -1.0);
        let h = HalfSpace::new(pt(1.0, 1.0), 0.3);
        let w = HalfSpace::anchor(&p0, &p0, &m);
        let r = project_onto_pair(&p0, &h, &w, &m, Some(&p0)).unwrap();
        let direct = project_halfspace(&p0, &h, &m).unwrap();
        assert!(m.distance(&r.point, &direct) < 1e-15);
    }

    #[test]
    fn parallel_normals_skip_gram() {
        let m = GammaMetric::default();
        let p = pt(0.0, 0.0);
        let h1 = HalfSpace::new(pt(-1.0, 0.0), 1.0); // x ≥ 1
        let h2 = HalfSpace::new(pt(-2.0, 0.0), 4.0); // x ≥ 2
        let r = project_onto_pair(&p, &h1, &h2, &m, None).unwrap();
        assert_ne!(r.case, ProjectionCase::Both);
        assert!(m.distance(&r.point, &pt(2.0, 0.0)) < 1e-15);
    }

    #[test]
    fn disjoint_pair_is_infeasible() {
        let m = GammaMetric::default();
        let p = pt(0.0, 0.0);
        let h1 = HalfSpace::new(pt(-1.0, 0.0), 1.0); // x ≥ 1
        let h2 = HalfSpace::new(pt(1.0, 0.0), 1.0); // x ≤ -1
        assert!(project_onto_pair(&p, &h1, &h2, &m, None).is_err());
    }
}
