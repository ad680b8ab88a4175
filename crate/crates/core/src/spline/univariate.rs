use crate::error::{FlowError, Result};

/// Univariate B-spline space of degree `p` and global smoothness `C^l` on a
/// uniform partition of `[0, 1]` into `n` elements, with an open knot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateSpline {
    degree: usize,
    smoothness: usize,
    num_elements: usize,
    knots: Vec<f64>,
}

/// Nonzero basis functions at a point: `values[k][d]` is the `d`-th
/// derivative of basis `first + k`.
#[derive(Debug, Clone)]
pub struct UnivariateEval {
    pub first: usize,
    pub values: Vec<[f64; 3]>,
}

impl UnivariateSpline {
    pub fn new(degree: usize, smoothness: usize, num_elements: usize) -> Result<Self> {
        if degree < 2 {
            return Err(FlowError::InvalidSpace(format!("degree {degree} < 2")));
        }
        if smoothness >= degree {
            return Err(FlowError::InvalidSpace(format!(
                "smoothness {smoothness} must be below degree {degree}"
            )));
        }
        if num_elements < 1 {
            return Err(FlowError::InvalidSpace("need at least one element".into()));
        }
        let mult = degree - smoothness;
        let mut knots = vec![0.0; degree + 1];
        for i in 1..num_elements {
            let t = i as f64 / num_elements as f64;
            knots.extend(std::iter::repeat_n(t, mult));
        }
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Ok(UnivariateSpline {
            degree,
            smoothness,
            num_elements,
            knots,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn smoothness(&self) -> usize {
        self.smoothness
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Interior knot multiplicity `p - l`.
    pub fn multiplicity(&self) -> usize {
        self.degree - self.smoothness
    }

    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn element_size(&self) -> f64 {
        1.0 / self.num_elements as f64
    }

    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        let h = self.element_size();
        (e as f64 * h, if e + 1 == self.num_elements { 1.0 } else { (e + 1) as f64 * h })
    }

    /// Element containing `t`; the right end point belongs to the last element.
    pub fn element_of(&self, t: f64) -> usize {
        let e = (t * self.num_elements as f64).floor();
        (e.max(0.0) as usize).min(self.num_elements - 1)
    }

    /// Index of the first basis function that is nonzero on element `e`.
    pub fn first_basis(&self, e: usize) -> usize {
        e * self.multiplicity()
    }

    /// Inclusive range of elements on which basis `j` is supported.
    pub fn support(&self, j: usize) -> (usize, usize) {
        let m = self.multiplicity();
        let lo = if j > self.degree { (j - self.degree).div_ceil(m) } else { 0 };
        let hi = (j / m).min(self.num_elements - 1);
        (lo, hi)
    }

    /// Values and up to `order` derivatives of the `p + 1` basis functions
    /// nonzero on element `e`, evaluated at `t`.
    pub fn eval_on_element(&self, e: usize, t: f64, order: usize) -> UnivariateEval {
        let p = self.degree;
        let span = p + e * self.multiplicity();
        let ders = ders_basis_funs(span, t, p, order.min(2), &self.knots);
        let values = (0..=p)
            .map(|k| {
                let mut d = [0.0; 3];
                for (o, slot) in d.iter_mut().enumerate().take(order.min(2) + 1) {
                    *slot = ders[o][k];
                }
                d
            })
            .collect();
        UnivariateEval {
            first: self.first_basis(e),
            values,
        }
    }

    pub fn eval(&self, t: f64, order: usize) -> UnivariateEval {
        self.eval_on_element(self.element_of(t), t, order)
    }
}

impl UnivariateSpline {
    /// Coefficients of the same spline in the dyadically refined space
    /// (`2N` elements, same degree and smoothness), by knot insertion.
    pub fn refine_coefficients(&self, coeffs: &[f64]) -> (UnivariateSpline, Vec<f64>) {
        let fine = UnivariateSpline::new(self.degree, self.smoothness, 2 * self.num_elements)
            .expect("refining a valid space");
        let mut knots = self.knots.clone();
        let mut ctrl = coeffs.to_vec();
        for e in 0..self.num_elements {
            let (a, b) = self.element_bounds(e);
            let mid = 0.5 * (a + b);
            for _ in 0..self.multiplicity() {
                (knots, ctrl) = insert_knot(&knots, self.degree, &ctrl, mid);
            }
        }
        debug_assert_eq!(ctrl.len(), fine.dim());
        (fine, ctrl)
    }
}

/// Boehm single knot insertion.
fn insert_knot(knots: &[f64], p: usize, ctrl: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let k = knots.iter().rposition(|&x| x <= t).expect("knot inside the vector");
    let mut new_ctrl = Vec::with_capacity(ctrl.len() + 1);
    for i in 0..=ctrl.len() {
        let q = if i + p <= k {
            ctrl[i]
        } else if i > k {
            ctrl[i - 1]
        } else {
            let alpha = (t - knots[i]) / (knots[i + p] - knots[i]);
            alpha * ctrl[i] + (1.0 - alpha) * ctrl[i - 1]
        };
        new_ctrl.push(q);
    }
    let mut new_knots = knots.to_vec();
    new_knots.insert(k + 1, t);
    (new_knots, new_ctrl)
}

/// Basis functions and derivatives on a knot span (Piegl & Tiller, A2.3).
fn ders_basis_funs(span: usize, t: f64, p: usize, n: usize, knots: &[f64]) -> Vec<Vec<f64>> {
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
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
    let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=n {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
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
    for (k, row) in ders.iter_mut().enumerate().skip(1) {
        for x in row.iter_mut() {
            *x *= fac;
        }
        fac *= (p - k) as f64;
    }
    ders
}
