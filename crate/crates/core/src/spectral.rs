//! Spectral primitives: irreducibility, spectral radius and abscissa, Perron vectors,
//! Hurwitz certificates and a small dense eigensolver.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Lu, SquareMatrix};

/// Relative tolerance targeted by [`spectral_radius`].
pub const RADIUS_TOL: f64 = 1e-12;

/// True iff the directed graph of nonzero entries is strongly connected.
///
/// A 1×1 matrix is treated as irreducible regardless of its entry.
pub fn is_irreducible(m: &SquareMatrix) -> bool {
    let n = m.dim();
    match n {
        0 => false,
        1 => true,
        _ => reaches_all(m, false) && reaches_all(m, true),
    }
}

fn reaches_all(m: &SquareMatrix, transpose: bool) -> bool {
    let n = m.dim();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            let a = if transpose { m[(j, i)] } else { m[(i, j)] };
            if a != 0.0 && !seen[j] {
                seen[j] = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    count == n
}

/// Strongly connected components of the support graph, each sorted ascending.
pub fn strong_components(m: &SquareMatrix) -> Vec<Vec<usize>> {
    // Iterative Tarjan.
    let n = m.dim();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0usize;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut j)) = call.last_mut() {
            if *j < n {
                let w = *j;
                *j += 1;
                if m[(v, w)] == 0.0 {
                    continue;
                }
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

struct PowerResult {
    lambda: f64,
    vector: Vec<f64>,
    converged: bool,
}

/// Shifted power iteration with Collatz–Wielandt bracketing on a nonnegative matrix.
fn power_iteration(m: &SquareMatrix, max_iter: usize) -> PowerResult {
    let n = m.dim();
    let row_max = (0..n).map(|i| m.row(i).iter().sum::<f64>()).fold(0.0, f64::max);
    let shift = 0.5 * row_max;
    let mut x = vec![1.0; n];
    let mut y = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        m.mul_vec_into(&x, &mut y);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for i in 0..n {
            if x[i] <= 0.0 {
                return PowerResult { lambda, vector: x, converged: false };
            }
            let r = y[i] / x[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        lambda = 0.5 * (lo + hi);
        if hi - lo <= RADIUS_TOL * hi.max(f64::MIN_POSITIVE) {
            return PowerResult { lambda, vector: x, converged: true };
        }
        let mut top = 0.0_f64;
        for i in 0..n {
            y[i] += shift * x[i];
            top = top.max(y[i]);
        }
        if top <= 0.0 || !top.is_finite() {
            return PowerResult { lambda, vector: x, converged: false };
        }
        for i in 0..n {
            x[i] = y[i] / top;
        }
    }
    PowerResult { lambda, vector: x, converged: false }
}

fn require_square_finite(m: &SquareMatrix) -> Result<()> {
    if m.dim() == 0 {
        return Err(Error::Contract("empty matrix".into()));
    }
    if !m.is_finite() {
        return Err(Error::Contract("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Spectral radius of a nonnegative matrix.
///
/// Power iteration runs for at most `100·dim` steps; if it has not bracketed the
/// radius by then (reducible or nearly periodic input) the dense eigensolver decides.
pub fn spectral_radius(m: &SquareMatrix) -> Result<f64> {
    require_square_finite(m)?;
    if !m.is_nonnegative() {
        return Err(Error::Contract("spectral_radius expects a nonnegative matrix".into()));
    }
    if m.is_zero() {
        return Ok(0.0);
    }
    let p = power_iteration(m, 100 * m.dim());
    if p.converged {
        return Ok(p.lambda);
    }
    let eig = eigenvalues(m).map_err(|e| {
        Error::Numerical(format!(
            "power iteration stalled at {:.6e} after {} steps and eigensolver failed: {e}",
            p.lambda,
            100 * m.dim()
        ))
    })?;
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Spectral abscissa of a Metzler matrix via `ρ(M + cI) − c`, `c = 1 + max|M_ii|`.
pub fn spectral_abscissa(m: &SquareMatrix) -> Result<f64> {
    require_square_finite(m)?;
    if !m.is_metzler() {
        return Err(Error::Contract("spectral_abscissa expects a Metzler matrix".into()));
    }
    let c = 1.0 + m.diagonal().iter().fold(0.0_f64, |a, d| a.max(d.abs()));
    Ok(spectral_radius(&m.shift_diagonal(c))? - c)
}

/// Largest real part of the spectrum for any real matrix.
///
/// Metzler input takes the Perron route; anything else goes through the QR eigensolver.
pub fn max_real_part(m: &SquareMatrix) -> Result<f64> {
    if m.is_metzler() {
        return spectral_abscissa(m);
    }
    Ok(eigenvalues(m)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Perron root with right and left Perron vectors (each scaled to unit max entry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perron {
    pub value: f64,
    pub right: Vec<f64>,
    pub left: Vec<f64>,
}

/// Perron root and vectors of an irreducible nonnegative matrix.
pub fn perron_vectors(m: &SquareMatrix) -> Result<Perron> {
    require_square_finite(m)?;
    if !m.is_nonnegative() {
        return Err(Error::Contract("perron_vectors expects a nonnegative matrix".into()));
    }
    if !is_irreducible(m) {
        return Err(Error::Contract("perron_vectors expects an irreducible matrix".into()));
    }
    let value = spectral_radius(m)?;
    let right = perron_direction(m, value)?;
    let left = perron_direction(&m.transpose(), value)?;
    Ok(Perron { value, right, left })
}

/// Inverse iteration just above the Perron root.
fn perron_direction(m: &SquareMatrix, lambda: f64) -> Result<Vec<f64>> {
    let n = m.dim();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let scale = lambda.abs().max(m.max_abs()).max(f64::MIN_POSITIVE);
    let mut x = vec![1.0; n];
    for bump in [1e-10, 1e-8, 1e-6] {
        let mu = lambda + bump * scale;
        let shifted = m.shift_diagonal(-mu);
        let lu = match Lu::factor(&shifted) {
            Ok(lu) => lu,
            Err(_) => continue,
        };
        let mut ok = true;
        for _ in 0..4 {
            let y = match lu.solve(&x) {
                Ok(y) => y,
                Err(_) => {
                    ok = false;
                    break;
                }
            };
            let top = y.iter().fold(0.0_f64, |a, v| if v.abs() > a.abs() { *v } else { a });
            if top == 0.0 {
                ok = false;
                break;
            }
            x = y.iter().map(|v| v / top).collect();
        }
        if ok && x.iter().all(|v| *v > 0.0) {
            let mut v = x;
            normalize_max(&mut v);
            return Ok(v);
        }
        x = vec![1.0; n];
    }
    // Fall back to plain power iteration on the primitive shift.
    let p = power_iteration(m, 100_000);
    if p.vector.iter().all(|v| *v > 0.0) {
        return Ok(p.vector);
    }
    Err(Error::Numerical("Perron vector did not converge".into()))
}

fn normalize_max(v: &mut [f64]) {
    let top = v.iter().cloned().fold(0.0, f64::max);
    for x in v.iter_mut() {
        *x /= top;
    }
}

/// Which test settled a Hurwitz question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HurwitzMethod {
    /// `J v ≪ 0` for the supplied positive vector.
    Vector,
    /// Sign of the spectral abscissa.
    Abscissa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurwitzVerdict {
    pub hurwitz: bool,
    pub method: HurwitzMethod,
    /// Spectral abscissa when the vector test did not certify.
    pub abscissa: Option<f64>,
}

/// Certifies a Metzler matrix as Hurwitz through a positive test vector, falling
/// back to the spectral abscissa.
pub fn hurwitz_certificate(j: &SquareMatrix, candidate: &[f64]) -> Result<HurwitzVerdict> {
    if !j.is_metzler() {
        return Err(Error::Contract("hurwitz_certificate expects a Metzler matrix".into()));
    }
    if candidate.len() != j.dim() {
        return Err(Error::Contract("candidate length does not match matrix".into()));
    }
    if candidate.iter().all(|c| *c > 0.0) && j.mul_vec(candidate).iter().all(|v| *v < 0.0) {
        return Ok(HurwitzVerdict { hurwitz: true, method: HurwitzMethod::Vector, abscissa: None });
    }
    let s = spectral_abscissa(j)?;
    Ok(HurwitzVerdict { hurwitz: s < 0.0, method: HurwitzMethod::Abscissa, abscissa: Some(s) })
}

/// All eigenvalues of a real matrix (balancing, Hessenberg reduction, shifted QR).
pub fn eigenvalues(m: &SquareMatrix) -> Result<Vec<Complex64>> {
    require_square_finite(m)?;
    let n = m.dim();
    // 1-based working copy keeps the classical index arithmetic readable.
    let mut a = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i + 1][j + 1] = m[(i, j)];
        }
    }
    balance(&mut a, n);
    hessenberg(&mut a, n);
    for i in 1..=n {
        for j in 1..i.saturating_sub(1) {
            a[i][j] = 0.0;
        }
    }
    hqr(&mut a, n)
}

fn balance(a: &mut [Vec<f64>], n: usize) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 1..=n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 1..=n {
                        a[i][j] *= g;
                    }
                    for j in 1..=n {
                        a[j][i] *= f;
                    }
                }
            }
        }
    }
}

fn hessenberg(a: &mut [Vec<f64>], n: usize) {
    for m in 2..n {
        let mut x = 0.0_f64;
        let mut i = m;
        for j in m..=n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..=n {
                let t = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = t;
            }
            for row in a.iter_mut().skip(1) {
                row.swap(i, m);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..=n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..=n {
                        a[i][j] -= y * a[m][j];
                    }
                    for j in 1..=n {
                        a[j][m] += y * a[j][i];
                    }
                }
            }
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

#[allow(clippy::many_single_char_names, unused_assignments)]
fn hqr(a: &mut [Vec<f64>], n: usize) -> Result<Vec<Complex64>> {
    const MAX_ITS: usize = 60;
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize;
    let mut t = 0.0;
    let (mut p, mut q, mut r, mut s, mut w, mut x, mut y, mut z) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 2 {
                s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nu][nu];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
            } else {
                y = a[nu - 1][nu - 1];
                w = a[nu][nu - 1] * a[nu - 1][nu];
                if l == nu - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[nu - 1] = x + z;
                        wr[nu] = x + z;
                        if z != 0.0 {
                            wr[nu] = x - w / z;
                        }
                        wi[nu - 1] = 0.0;
                        wi[nu] = 0.0;
                    } else {
                        wr[nu - 1] = x + p;
                        wr[nu] = x + p;
                        wi[nu - 1] = -z;
                        wi[nu] = z;
                    }
                    nn -= 2;
                } else {
                    if its == MAX_ITS {
                        return Err(Error::Numerical("QR eigensolver did not converge".into()));
                    }
                    if its == 10 || its == 20 || its == 40 {
                        t += x;
                        for i in 1..=nu {
                            a[i][i] -= x;
                        }
                        s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nu - 2;
                    loop {
                        z = a[m][m];
                        r = x - z;
                        s = y - z;
                        p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - r - s;
                        r = a[m + 2][m + 1];
                        s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nu {
                        a[i][i - 2] = 0.0;
                        if i != m + 2 {
                            a[i][i - 3] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = 0.0;
                            if k != nu - 1 {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nu {
                                p = a[k][j] + q * a[k + 1][j];
                                if k != nu - 1 {
                                    p += r * a[k + 2][j];
                                    a[k + 2][j] -= p * z;
                                }
                                a[k + 1][j] -= p * y;
                                a[k][j] -= p * x;
                            }
                            let mmin = nu.min(k + 3);
                            for i in l..=mmin {
                                p = x * a[i][k] + y * a[i][k + 1];
                                if k != nu - 1 {
                                    p += z * a[i][k + 2];
                                    a[i][k + 2] -= p * r;
                                }
                                a[i][k + 1] -= p * q;
                                a[i][k] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 1 || l as isize >= nn - 1 {
                break;
            }
        }
    }
    let out: Vec<Complex64> = (1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect();
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("QR eigensolver produced non-finite values".into()));
    }
    Ok(out)
}
