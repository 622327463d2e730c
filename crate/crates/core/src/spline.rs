//! Univariate and tensor-product B-spline / NURBS bases, knot insertion and
//! Gauss–Legendre quadrature.
//!
//! Knot vectors are open (clamped) on `[0, 1]`. Basis functions are indexed
//! from zero; in two dimensions the local index of function `(i, j)` is
//! `i + n_u * j`, i.e. the `u` index runs fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        let p = degree;
        if knots.len() < 2 * (p + 1) {
            return Err(Error::Input(format!(
                "knot vector of degree {p} needs at least {} entries, got {}",
                2 * (p + 1),
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite() || *k < 0.0 || *k > 1.0) {
            return Err(Error::Input("knots must lie in [0, 1]".into()));
        }
        if knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Input("knots must be non-decreasing".into()));
        }
        let m = knots.len();
        let clamped = knots[..=p].iter().all(|&k| k == 0.0)
            && knots[m - p - 1..].iter().all(|&k| k == 1.0)
            && knots[p + 1] > 0.0
            && knots[m - p - 2] < 1.0;
        if !clamped {
            return Err(Error::Input(format!(
                "knot vector must be open: 0 and 1 each repeated exactly {} times",
                p + 1
            )));
        }
        let mut run = 1;
        for w in knots[p..m - p].windows(2) {
            if w[0] == w[1] {
                run += 1;
                if run > p && w[0] > 0.0 && w[0] < 1.0 {
                    return Err(Error::Input(format!(
                        "interior knot {} has multiplicity above the degree {p}",
                        w[0]
                    )));
                }
            } else {
                run = 1;
            }
        }
        Ok(Self { knots, degree })
    }

    /// Open knot vector with `n_elements` equal elements.
    pub fn open_uniform(degree: usize, n_elements: usize) -> Self {
        let n_elements = n_elements.max(1);
        let mut knots = vec![0.0; degree + 1];
        knots.extend((1..n_elements).map(|i| i as f64 / n_elements as f64));
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self { knots, degree }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Distinct knot values, `0` and `1` included.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &k in &self.knots {
            if out.last() != Some(&k) {
                out.push(k);
            }
        }
        out
    }

    pub fn num_elements(&self) -> usize {
        self.breakpoints().len() - 1
    }

    /// Non-degenerate knot intervals as `(span, start, end)`.
    pub fn elements(&self) -> Vec<(usize, f64, f64)> {
        let p = self.degree;
        (p..self.num_basis())
            .filter(|&i| self.knots[i] < self.knots[i + 1])
            .map(|i| (i, self.knots[i], self.knots[i + 1]))
            .collect()
    }

    /// Index `i` with `knots[i] <= xi < knots[i+1]`; `xi = 1` maps into the
    /// last non-degenerate interval.
    pub fn find_span(&self, xi: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::Domain(format!("parameter {xi} outside [0, 1]")));
        }
        let n = self.num_basis();
        if xi >= self.knots[n] {
            return Ok(n - 1);
        }
        let (mut lo, mut hi) = (self.degree, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if xi < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(lo)
    }

    /// Knot vector with every element split at its midpoint.
    pub fn bisected(&self) -> Self {
        let mut kv = self.clone();
        for (_, a, b) in self.elements() {
            kv = kv.with_knot(0.5 * (a + b));
        }
        kv
    }

    fn with_knot(&self, x: f64) -> Self {
        let pos = self.knots.partition_point(|&k| k <= x);
        let mut knots = self.knots.clone();
        knots.insert(pos, x);
        Self {
            knots,
            degree: self.degree,
        }
    }
}

/// Nonzero basis functions (and derivatives) at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    pub span: usize,
    /// `derivs[k][j]` is the `k`-th derivative of basis `span - p + j`;
    /// row 0 holds the values.
    pub derivs: Vec<Vec<f64>>,
}

impl BasisEval {
    pub fn values(&self) -> &[f64] {
        &self.derivs[0]
    }

    /// Index of the first nonzero basis function.
    pub fn first_index(&self) -> usize {
        self.span + 1 - self.derivs[0].len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Input("NURBS weights must be positive".into()));
        }
        Ok(Self(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// B-spline values and derivatives up to `deriv_order` (Cox–de Boor with
/// the triangular derivative scheme). Rows above the degree are zero.
pub fn eval_bspline(kv: &KnotVector, xi: f64, deriv_order: usize) -> Result<BasisEval> {
    let span = kv.find_span(xi)?;
    Ok(BasisEval {
        span,
        derivs: ders_basis(kv.knots(), kv.degree(), span, xi, deriv_order),
    })
}

fn ders_basis(u: &[f64], p: usize, span: usize, xi: f64, n: usize) -> Vec<Vec<f64>> {
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = xi - u[span + 1 - j];
        right[j] = u[span + j] - xi;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }

    let mut ders = vec![vec![0.0; p + 1]; n + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let nk = n.min(p);
    let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
    for r in 0..=p {
        let (mut s1, mut s2) = (0, 1);
        a[0][0] = 1.0;
        for k in 1..=nk {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                let rk = rk as usize;
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut fac = p as f64;
    for (k, row) in ders.iter_mut().enumerate().take(nk + 1).skip(1) {
        for v in row.iter_mut() {
            *v *= fac;
        }
        fac *= (p - k) as f64;
    }
    ders
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Rational basis `w_i B_i / sum_j w_j B_j` with derivatives by the
/// generalized quotient rule.
pub fn eval_nurbs(
    kv: &KnotVector,
    w: &WeightVector,
    xi: f64,
    deriv_order: usize,
) -> Result<BasisEval> {
    if w.0.len() != kv.num_basis() {
        return Err(Error::Input(format!(
            "{} weights for {} basis functions",
            w.0.len(),
            kv.num_basis()
        )));
    }
    let b = eval_bspline(kv, xi, deriv_order)?;
    let first = b.first_index();
    let p1 = kv.degree() + 1;
    let weighted: Vec<Vec<f64>> = b
        .derivs
        .iter()
        .map(|row| (0..p1).map(|j| row[j] * w.0[first + j]).collect())
        .collect();
    let wsum: Vec<f64> = weighted.iter().map(|row| row.iter().sum()).collect();
    let mut out = vec![vec![0.0; p1]; deriv_order + 1];
    for k in 0..=deriv_order {
        for j in 0..p1 {
            let mut v = weighted[k][j];
            for i in 1..=k {
                v -= binomial(k, i) * wsum[i] * out[k - i][j];
            }
            out[k][j] = v / wsum[0];
        }
    }
    Ok(BasisEval {
        span: b.span,
        derivs: out,
    })
}

/// Nonzero bivariate basis functions at one reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBasis {
    /// Patch-local indices `i + n_u * j` of the nonzero functions.
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    /// Partial derivatives with respect to the first reference coordinate.
    pub d_u: Vec<f64>,
    /// Partial derivatives with respect to the second reference coordinate.
    pub d_v: Vec<f64>,
}

/// Tensor-product basis at `xi`, rational when `weights` is given
/// (length `n_u * n_v`, `u` index fastest). Always returns first partials.
pub fn eval_tensor_2d(
    kv_u: &KnotVector,
    kv_v: &KnotVector,
    weights: Option<&[f64]>,
    xi: (f64, f64),
) -> Result<TensorBasis> {
    let bu = eval_bspline(kv_u, xi.0, 1)?;
    let bv = eval_bspline(kv_v, xi.1, 1)?;
    let nu = kv_u.num_basis();
    let (fu, fv) = (bu.first_index(), bv.first_index());
    let (pu1, pv1) = (kv_u.degree() + 1, kv_v.degree() + 1);
    let count = pu1 * pv1;
    let mut out = TensorBasis {
        indices: Vec::with_capacity(count),
        values: Vec::with_capacity(count),
        d_u: Vec::with_capacity(count),
        d_v: Vec::with_capacity(count),
    };
    for b in 0..pv1 {
        for a in 0..pu1 {
            let idx = (fu + a) + nu * (fv + b);
            let w = weights.map_or(1.0, |w| w[idx]);
            out.indices.push(idx);
            out.values.push(w * bu.derivs[0][a] * bv.derivs[0][b]);
            out.d_u.push(w * bu.derivs[1][a] * bv.derivs[0][b]);
            out.d_v.push(w * bu.derivs[0][a] * bv.derivs[1][b]);
        }
    }
    if weights.is_some() {
        let wsum: f64 = out.values.iter().sum();
        let wu: f64 = out.d_u.iter().sum();
        let wv: f64 = out.d_v.iter().sum();
        for k in 0..count {
            let r = out.values[k] / wsum;
            out.d_u[k] = (out.d_u[k] - r * wu) / wsum;
            out.d_v[k] = (out.d_v[k] - r * wv) / wsum;
            out.values[k] = r;
        }
    }
    Ok(out)
}

/// Insert one knot into a curve given by homogeneous control points
/// (Boehm's algorithm). Returns the new knot vector and control points.
pub fn insert_knot<const D: usize>(
    kv: &KnotVector,
    points: &[[f64; D]],
    x: f64,
) -> Result<(KnotVector, Vec<[f64; D]>)> {
    let p = kv.degree();
    let u = kv.knots();
    let k = kv.find_span(x)?;
    let n = points.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let q = if i + p <= k {
            points[i]
        } else if i > k {
            points[i - 1]
        } else {
            let a = (x - u[i]) / (u[i + p] - u[i]);
            let mut q = [0.0; D];
            for d in 0..D {
                q[d] = a * points[i][d] + (1.0 - a) * points[i - 1][d];
            }
            q
        };
        out.push(q);
    }
    Ok((kv.with_knot(x), out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    /// Nodes and weights mapped to the interval `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

/// Gauss–Legendre rule with `n_points` nodes on `(-1, 1)`.
pub fn gauss_rule(n_points: usize) -> Result<QuadRule> {
    if !(1..=16).contains(&n_points) {
        return Err(Error::Config(format!(
            "Gauss rule needs 1..=16 points, got {n_points}"
        )));
    }
    let n = n_points;
    if n == 1 {
        return Ok(QuadRule {
            points: vec![0.0],
            weights: vec![2.0],
        });
    }
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton on P_n from the Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points[i] = -x;
        points[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
    Ok(QuadRule { points, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn span_lookup() {
        let kv = KnotVector::new(vec![0.0, 0.0, 0.5, 1.0, 1.0], 1).unwrap();
        assert_eq!(kv.find_span(0.75).unwrap(), 2);
        assert_eq!(kv.find_span(0.0).unwrap(), 1);
        let kv2 = KnotVector::new(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(kv2.find_span(1.0).unwrap(), 2);
        assert_eq!(kv2.find_span(0.0).unwrap(), 2);
        assert!(matches!(kv2.find_span(1.5), Err(Error::Domain(_))));
        assert!(matches!(kv2.find_span(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_bad_knot_vectors() {
        assert!(KnotVector::new(vec![0.0, 0.5, 0.2, 1.0], 1).is_err());
        assert!(KnotVector::new(vec![0.0, 0.0, 0.5, 1.0], 1).is_err());
        assert!(KnotVector::new(vec![0.0, 0.0, 0.0, 1.0, 1.0], 1).is_err());
        assert!(KnotVector::new(vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0], 1).is_err());
    }

    #[test]
    fn quadratic_bernstein() {
        let kv = KnotVector::open_uniform(2, 1);
        let b = eval_bspline(&kv, 0.5, 1).unwrap();
        assert_abs_diff_eq!(b.values()[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(b.values()[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b.values()[2], 0.25, epsilon = 1e-15);
        // d/dx of (1-x)^2, 2x(1-x), x^2 at 1/2
        assert_abs_diff_eq!(b.derivs[1][0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b.derivs[1][1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b.derivs[1][2], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn degree_zero_is_indicator() {
        let kv = KnotVector::new(vec![0.0, 0.5, 1.0], 0).unwrap();
        let b = eval_bspline(&kv, 0.7, 0).unwrap();
        assert_eq!(b.span, 1);
        assert_eq!(b.values(), &[1.0]);
    }

    #[test]
    fn derivative_rows_above_degree_are_zero() {
        let kv = KnotVector::open_uniform(1, 3);
        let b = eval_bspline(&kv, 0.4, 3).unwrap();
        assert_eq!(b.derivs.len(), 4);
        assert!(b.derivs[2].iter().chain(&b.derivs[3]).all(|&v| v == 0.0));
    }

    #[test]
    fn nurbs_reduces_to_bspline_and_is_scale_invariant() {
        let kv = KnotVector::new(vec![0., 0., 0., 0.3, 0.6, 1., 1., 1.], 2).unwrap();
        let ones = WeightVector::new(vec![1.0; 5]).unwrap();
        let threes = WeightVector::new(vec![3.0; 5]).unwrap();
        for i in 0..10 {
            let xi = 0.05 + 0.093 * i as f64;
            let b = eval_bspline(&kv, xi, 2).unwrap();
            let n1 = eval_nurbs(&kv, &ones, xi, 2).unwrap();
            let n3 = eval_nurbs(&kv, &threes, xi, 2).unwrap();
            for k in 0..3 {
                for j in 0..3 {
                    let scale = b.derivs[k][j].abs().max(1.0);
                    assert_abs_diff_eq!(b.derivs[k][j], n1.derivs[k][j], epsilon = 1e-14 * scale);
                    assert_abs_diff_eq!(n1.derivs[k][j], n3.derivs[k][j], epsilon = 1e-14 * scale);
                }
            }
        }
    }

    #[test]
    fn quarter_circle_weights_partition_unity() {
        let kv = KnotVector::open_uniform(2, 1);
        let w = WeightVector::new(vec![1.0, std::f64::consts::FRAC_1_SQRT_2, 1.0]).unwrap();
        for i in 0..=20 {
            let n = eval_nurbs(&kv, &w, i as f64 / 20.0, 1).unwrap();
            assert_abs_diff_eq!(n.values().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(n.derivs[1].iter().sum::<f64>(), 0.0, epsilon = 1e-13);
        }
        assert!(WeightVector::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn tensor_product_is_separable() {
        let ku = KnotVector::open_uniform(2, 3);
        let kv = KnotVector::open_uniform(1, 2);
        let xi = (0.41, 0.77);
        let t = eval_tensor_2d(&ku, &kv, None, xi).unwrap();
        let bu = eval_bspline(&ku, xi.0, 1).unwrap();
        let bv = eval_bspline(&kv, xi.1, 1).unwrap();
        assert_eq!(t.values.len(), 6);
        for b in 0..2 {
            for a in 0..3 {
                let k = a + 3 * b;
                assert_abs_diff_eq!(t.values[k], bu.values()[a] * bv.values()[b], epsilon = 1e-15);
                assert_eq!(t.indices[k], bu.first_index() + a + 5 * (bv.first_index() + b));
            }
        }
        assert_abs_diff_eq!(t.values.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn tensor_derivative_matches_finite_difference() {
        let ku = KnotVector::new(vec![0., 0., 0., 0.4, 1., 1., 1.], 2).unwrap();
        let kv = KnotVector::open_uniform(2, 2);
        let weights: Vec<f64> = (0..16).map(|i| 0.6 + 0.05 * i as f64).collect();
        let h = 1e-5;
        for &(x, y) in &[(0.2, 0.3), (0.63, 0.81), (0.95, 0.1)] {
            let t = eval_tensor_2d(&ku, &kv, Some(&weights), (x, y)).unwrap();
            let value_at = |xx: f64, yy: f64, idx: usize| {
                let tt = eval_tensor_2d(&ku, &kv, Some(&weights), (xx, yy)).unwrap();
                tt.indices.iter().position(|&i| i == idx).map_or(0.0, |k| tt.values[k])
            };
            for (k, &idx) in t.indices.iter().enumerate() {
                let fd_u = (value_at(x + h, y, idx) - value_at(x - h, y, idx)) / (2.0 * h);
                let fd_v = (value_at(x, y + h, idx) - value_at(x, y - h, idx)) / (2.0 * h);
                assert!((fd_u - t.d_u[k]).abs() <= 1e-6 * t.d_u[k].abs().max(1.0));
                assert!((fd_v - t.d_v[k]).abs() <= 1e-6 * t.d_v[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn gauss_rules() {
        let g1 = gauss_rule(1).unwrap();
        assert_eq!(g1.points, vec![0.0]);
        assert_abs_diff_eq!(g1.weights[0], 2.0, epsilon = 1e-15);
        let g2 = gauss_rule(2).unwrap();
        assert_abs_diff_eq!(g2.points[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(g2.weights[0], 1.0, epsilon = 1e-15);
        let g5 = gauss_rule(5).unwrap();
        let integral: f64 = g5.points.iter().zip(&g5.weights).map(|(x, w)| w * x.powi(8)).sum();
        assert_abs_diff_eq!(integral, 2.0 / 9.0, epsilon = 1e-12);
        for n in 1..=16 {
            let g = gauss_rule(n).unwrap();
            assert_abs_diff_eq!(g.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-12);
            for deg in 0..2 * n {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg + 1) as f64 };
                let q: f64 = g.points.iter().zip(&g.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert_abs_diff_eq!(q, exact, epsilon = 1e-12);
            }
        }
        assert!(matches!(gauss_rule(0), Err(Error::Config(_))));
        assert!(matches!(gauss_rule(17), Err(Error::Config(_))));
    }

    #[test]
    fn knot_insertion_preserves_curve() {
        let kv = KnotVector::open_uniform(2, 1);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let pts = [[1.0, 0.0, 1.0], [s, s, s], [0.0, 1.0, 1.0]];
        let (kv2, pts2) = insert_knot(&kv, &pts, 0.3).unwrap();
        assert_eq!(kv2.num_basis(), 4);
        let curve = |kv: &KnotVector, p: &[[f64; 3]], t: f64| {
            let b = eval_bspline(kv, t, 0).unwrap();
            let f = b.first_index();
            let mut h = [0.0; 3];
            for (j, v) in b.values().iter().enumerate() {
                for d in 0..3 {
                    h[d] += v * p[f + j][d];
                }
            }
            [h[0] / h[2], h[1] / h[2]]
        };
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            let (a, b) = (curve(&kv, &pts, t), curve(&kv2, &pts2, t));
            assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-14);
            assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-14);
            assert_abs_diff_eq!(a[0].hypot(a[1]), 1.0, epsilon = 1e-14);
        }
    }
}
