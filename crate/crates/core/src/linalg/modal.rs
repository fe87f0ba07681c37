//! Modal decomposition of symmetric-definite pencils `K φ = λ M φ`.
//!
//! Two routes share one output type:
//! - banded: Sturm-sequence bisection on `K − λM` (inertia from a banded
//!   LDLᵀ) followed by shifted inverse iteration and a Rayleigh-quotient
//!   polish. Cost `O(n²·b²)` for half-bandwidth `b`.
//! - dense: Cholesky of `M` and a symmetric eigensolver, `O(n³)`.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::banded::{rcm_ordering, BandedLu};
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigenvalues `ω²` (ascending) with input/output projections of the
/// M-orthonormal mode shapes.
#[derive(Clone, Debug)]
pub struct ModalData<T: Real> {
    pub omega_sq: Vec<T>,
    /// `Φᵀ F`, one row per mode.
    pub modal_input: DMatrix<T>,
    /// `Cout Φ`, one column per mode.
    pub modal_output: DMatrix<T>,
}

/// Which algorithm produced a [`ModalData`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModalRoute {
    Banded,
    Dense,
}

/// Picks the cheaper route for a pencil of order `n` and half-bandwidth `b`.
pub fn preferred_route(n: usize, half_bandwidth: usize) -> ModalRoute {
    if n > 64 && 8 * half_bandwidth * half_bandwidth < n {
        ModalRoute::Banded
    } else {
        ModalRoute::Dense
    }
}

pub fn symmetric_modes<T: Real>(
    k: &SparseMatrix<T>,
    m: &SparseMatrix<T>,
    input: &DMatrix<T>,
    output: &DMatrix<T>,
) -> Result<(ModalData<T>, ModalRoute)> {
    let pattern = k.lin_comb(T::one(), m, T::one())?;
    let perm = rcm_ordering(&pattern);
    let (b, _) = pattern.permute_sym(&perm).bandwidths();
    let route = preferred_route(k.nrows(), b);
    let data = match route {
        ModalRoute::Banded => banded_modes(k, m, input, output, perm)?,
        ModalRoute::Dense => dense_modes(k, m, input, output)?,
    };
    Ok((data, route))
}

pub fn dense_modes<T: Real>(
    k: &SparseMatrix<T>,
    m: &SparseMatrix<T>,
    input: &DMatrix<T>,
    output: &DMatrix<T>,
) -> Result<ModalData<T>> {
    let chol = Cholesky::new(m.to_dense())
        .ok_or_else(|| Error::InvalidModel("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L⁻¹ K L⁻ᵀ
    let linv_k = l
        .solve_lower_triangular(&k.to_dense())
        .ok_or_else(|| Error::EigenFailure("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&linv_k.transpose())
        .ok_or_else(|| Error::EigenFailure("triangular solve failed".into()))?;
    let c = (&c + c.transpose()) * T::lit(0.5);
    let dim = c.nrows();
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite eigenvalues"));
    let u = DMatrix::from_fn(dim, dim, |i, j| eig.eigenvectors[(i, order[j])]);
    // Φ = L⁻ᵀ U
    let phi = l
        .transpose()
        .solve_upper_triangular(&u)
        .ok_or_else(|| Error::EigenFailure("triangular solve failed".into()))?;
    Ok(ModalData {
        omega_sq: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        modal_input: phi.transpose() * input,
        modal_output: output * phi,
    })
}

/// Symmetric banded LDLᵀ without pivoting, returning the number of
/// negative pivots (the inertia of the matrix by Sylvester's law).
struct SturmCounter<T: Real> {
    n: usize,
    b: usize,
    k: Vec<T>,
    m: Vec<T>,
    tiny: T,
    work_l: Vec<T>,
    work_d: Vec<T>,
}

impl<T: Real> SturmCounter<T> {
    fn new(k: &SparseMatrix<T>, m: &SparseMatrix<T>, b: usize) -> Self {
        let n = k.nrows();
        let w = b + 1;
        // lower band, row-major: entry (i, j) for i-b <= j <= i at i*w + (j + b - i)
        let mut kb = vec![T::zero(); n * w];
        let mut mb = vec![T::zero(); n * w];
        for (i, j, v) in k.triplets() {
            if j <= i {
                kb[i * w + (j + b - i)] += v;
            }
        }
        for (i, j, v) in m.triplets() {
            if j <= i {
                mb[i * w + (j + b - i)] += v;
            }
        }
        let scale = k.norm_inf().max(T::min_positive());
        Self {
            n,
            b,
            k: kb,
            m: mb,
            tiny: scale * T::machine_eps() * T::machine_eps(),
            work_l: vec![T::zero(); n * w],
            work_d: vec![T::zero(); n],
        }
    }

    fn negative_count(&mut self, lambda: T) -> usize {
        let (n, b) = (self.n, self.b);
        let w = b + 1;
        if b == 1 {
            return self.negative_count_tridiagonal(lambda);
        }
        let mut count = 0;
        for i in 0..n {
            let j0 = i.saturating_sub(b);
            for j in j0..=i {
                let aij = self.k[i * w + (j + b - i)] - lambda * self.m[i * w + (j + b - i)];
                let mut s = aij;
                let k0 = j0.max(j.saturating_sub(b));
                for kk in k0..j {
                    s -= self.work_l[i * w + (kk + b - i)] * self.work_l[j * w + (kk + b - j)] * self.work_d[kk];
                }
                if j < i {
                    self.work_l[i * w + (j + b - i)] = s / self.work_d[j];
                } else {
                    let d = if s.abs() < self.tiny { self.tiny } else { s };
                    if d < T::zero() {
                        count += 1;
                    }
                    self.work_d[i] = d;
                    self.work_l[i * w + b] = T::one();
                }
            }
        }
        count
    }

    /// `b = 1` specialization of the same recurrence,
    /// `d_i = a_ii − a_{i,i−1}² / d_{i−1}`.
    fn negative_count_tridiagonal(&mut self, lambda: T) -> usize {
        let mut count = 0;
        let mut prev = T::one();
        for i in 0..self.n {
            let mut d = self.k[2 * i + 1] - lambda * self.m[2 * i + 1];
            if i > 0 {
                let off = self.k[2 * i] - lambda * self.m[2 * i];
                d -= off * off / prev;
            }
            if d.abs() < self.tiny {
                d = self.tiny;
            }
            if d < T::zero() {
                count += 1;
            }
            self.work_d[i] = d;
            prev = d;
        }
        count
    }
}

/// Sign counts of the eigenvalues of a symmetric matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

/// Inertia of a symmetric sparse matrix via banded LDLᵀ in RCM order.
///
/// Pivots with magnitude below `zero_tol·‖A‖∞` count as zero.
pub fn inertia<T: Real>(a: &SparseMatrix<T>, zero_tol: T) -> Inertia {
    let n = a.nrows();
    let perm = rcm_ordering(a);
    let ap = a.permute_sym(&perm);
    let (b, _) = ap.bandwidths();
    let zeros = SparseMatrix::zeros(n, n);
    let mut counter = SturmCounter::new(&ap, &zeros, b);
    counter.negative_count(T::zero());
    let cut = zero_tol * a.norm_inf();
    let mut out = Inertia {
        negative: 0,
        zero: 0,
        positive: 0,
    };
    for &d in &counter.work_d {
        if d.abs() <= cut {
            out.zero += 1;
        } else if d < T::zero() {
            out.negative += 1;
        } else {
            out.positive += 1;
        }
    }
    out
}

pub fn banded_modes<T: Real>(
    k: &SparseMatrix<T>,
    m: &SparseMatrix<T>,
    input: &DMatrix<T>,
    output: &DMatrix<T>,
    perm: Vec<usize>,
) -> Result<ModalData<T>> {
    let n = k.nrows();
    let kp = k.permute_sym(&perm);
    let mp = m.permute_sym(&perm);
    let (b, _) = kp.lin_comb(T::one(), &mp, T::one())?.bandwidths();
    let mut sturm = SturmCounter::new(&kp, &mp, b);

    if sturm.negative_count(T::zero()) > 0 {
        return Err(Error::InvalidModel("stiffness matrix is not positive semidefinite".into()));
    }
    let min_m = mp.diagonal().into_iter().fold(T::max_value().unwrap_or_else(T::one), |a, v| a.min(v));
    if !(min_m > T::zero()) {
        return Err(Error::InvalidModel("mass matrix has a non-positive diagonal entry".into()));
    }
    let mut hi = kp.norm_inf() / min_m * T::lit(2.0) + T::min_positive();
    let mut guard = 0;
    while sturm.negative_count(hi) < n {
        hi *= T::lit(4.0);
        guard += 1;
        if guard > 200 {
            return Err(Error::EigenFailure("could not bracket the largest eigenvalue".into()));
        }
    }

    // bisection to a coarse relative width; inverse iteration polishes
    let rel_tol = T::lit(1e-9);
    let mut estimates: Vec<T> = Vec::with_capacity(n);
    let mut stack = vec![(T::zero(), hi, 0usize, n)];
    while let Some((lo, up, c_lo, c_up)) = stack.pop() {
        if c_up == c_lo {
            continue;
        }
        let width = up - lo;
        if width <= rel_tol * up.abs() || width <= T::min_positive() * T::lit(1e3) {
            let mid = (lo + up) * T::lit(0.5);
            estimates.extend(std::iter::repeat(mid).take(c_up - c_lo));
            continue;
        }
        let mid = (lo + up) * T::lit(0.5);
        let c_mid = sturm.negative_count(mid);
        // push upper half first so lower half pops first
        stack.push((mid, up, c_mid, c_up));
        stack.push((lo, mid, c_lo, c_mid));
    }
    estimates.sort_by(|a, b| a.partial_cmp(b).expect("finite"));

    // inverse iteration with M-orthogonalization inside clusters; the
    // shifted matrices are formed directly in band storage
    let idx = |i: usize, j: usize| BandedLu::<T>::band_index(b, b, i, j);
    let mut band_k = vec![T::zero(); n * BandedLu::<T>::band_width(b, b)];
    let mut band_m = band_k.clone();
    for (i, j, v) in kp.triplets() {
        band_k[idx(i, j)] += v;
    }
    for (i, j, v) in mp.triplets() {
        band_m[idx(i, j)] += v;
    }
    let (k_norm, m_norm) = (kp.norm_inf(), mp.norm_inf());
    let identity: Vec<usize> = (0..n).collect();
    let cluster_tol = T::lit(1e-7);
    let mut vectors: Vec<DVector<T>> = Vec::with_capacity(n);
    let mut omega_sq = Vec::with_capacity(n);
    let mut cluster_start = 0;
    for (ix, &lam) in estimates.iter().enumerate() {
        if ix > 0 && (lam - estimates[ix - 1]).abs() > cluster_tol * lam.abs() {
            cluster_start = ix;
        }
        let mut shift = lam;
        let lu = loop {
            let band: Vec<T> = band_k.iter().zip(&band_m).map(|(&kv, &mv)| kv - shift * mv).collect();
            match BandedLu::factor_band(n, b, b, band, identity.clone(), k_norm + shift.abs() * m_norm) {
                Ok(lu) => break lu,
                Err(_) => shift += lam.abs().max(T::one()) * T::lit(1e-10),
            }
        };
        let mut x = DVector::from_fn(n, |i, _| {
            // deterministic start vector
            let h = (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (ix as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            T::lit(((h >> 11) as f64) / ((1u64 << 53) as f64) - 0.5)
        });
        let mut mx = mp.mul_vec(&x);
        for _ in 0..3 {
            x.copy_from(&mx);
            lu.solve_reordered(x.as_mut_slice());
            for prev in &vectors[cluster_start..ix] {
                let c = prev.dot(&mp.mul_vec(&x));
                x.axpy(-c, prev, T::one());
            }
            mx = mp.mul_vec(&x);
            let nrm = x.dot(&mx).sqrt();
            if !(nrm > T::zero()) {
                return Err(Error::EigenFailure(format!("inverse iteration collapsed for mode {ix}")));
            }
            x /= nrm;
            mx /= nrm;
        }
        // x is M-normalized, so the Rayleigh quotient is xᵀKx
        omega_sq.push(x.dot(&kp.mul_vec(&x)));
        vectors.push(x);
    }

    // back to the original numbering
    let mut phi = DMatrix::<T>::zeros(n, n);
    for (j, v) in vectors.iter().enumerate() {
        for (new, &old) in perm.iter().enumerate() {
            phi[(old, j)] = v[new];
        }
    }
    Ok(ModalData {
        omega_sq,
        modal_input: phi.transpose() * input,
        modal_output: output * &phi,
    })
}

/// Least-squares fit `R ≈ αM + βK` over the stored entries; returns
/// `Some((α, β))` when the relative Frobenius residual is within `rel_tol`.
pub fn rayleigh_coefficients<T: Real>(
    m: &SparseMatrix<T>,
    k: &SparseMatrix<T>,
    r: &SparseMatrix<T>,
    rel_tol: T,
) -> Option<(T, T)> {
    let r_norm = r.norm_fro();
    if r_norm == T::zero() {
        return Some((T::zero(), T::zero()));
    }
    let dot = |a: &SparseMatrix<T>, b: &SparseMatrix<T>| -> T {
        let mut acc = T::zero();
        for i in 0..a.nrows() {
            let mut rb = b.row(i).peekable();
            for (j, v) in a.row(i) {
                while let Some(&(jb, _)) = rb.peek() {
                    if jb < j {
                        rb.next();
                    } else {
                        break;
                    }
                }
                if let Some(&(jb, w)) = rb.peek() {
                    if jb == j {
                        acc += v * w;
                    }
                }
            }
        }
        acc
    };
    let (mm, mk, kk) = (dot(m, m), dot(m, k), dot(k, k));
    let (mr, kr) = (dot(m, r), dot(k, r));
    let det = mm * kk - mk * mk;
    let (alpha, beta) = if det.abs() > T::machine_eps() * mm * kk * T::lit(16.0) {
        ((mr * kk - kr * mk) / det, (mm * kr - mk * mr) / det)
    } else {
        // M and K parallel: attribute everything to the mass term
        (mr / mm, T::zero())
    };
    let resid = r.lin_comb(T::one(), &m.lin_comb(alpha, k, beta).ok()?, -T::one()).ok()?;
    (resid.norm_fro() <= rel_tol * r_norm).then_some((alpha, beta))
}
