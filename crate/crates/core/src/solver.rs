//! P1 finite element minimization of `J[u] = ∫ f(∇u) dx` with Dirichlet
//! data, plus the scalar inversion `y ↦ ∂f/∂p₂(a, y)`.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::{Col, Side};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{Density, HessianForm, Vec2};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Nodal values of a P1 field on a mesh.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

/// Per-element constant gradients of a P1 field.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub gradients: Vec<Vec2>,
}

impl DiscreteField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.node_count() {
            return Err(Error::InvalidArgument(format!("{} values for {} nodes", values.len(), mesh.node_count())));
        }
        Ok(Self { mesh, values })
    }

    /// Nodal interpolant of `u`.
    pub fn interpolate(mesh: Arc<Mesh>, u: impl Fn(Vec2) -> f64) -> Self {
        let values = mesh.nodes.iter().map(|p| u(*p)).collect();
        Self { mesh, values }
    }

    pub fn element_gradient(&self, element: usize) -> Vec2 {
        let e = self.mesh.elements[element];
        let g = &self.mesh.geometry()[element];
        g.grads[0] * self.values[e[0]] + g.grads[1] * self.values[e[1]] + g.grads[2] * self.values[e[2]]
    }

    pub fn gradients(&self) -> GradientField {
        GradientField { gradients: (0..self.mesh.element_count()).map(|e| self.element_gradient(e)).collect() }
    }

    pub fn max_abs_error(&self, exact: impl Fn(Vec2) -> f64) -> f64 {
        self.mesh.nodes.iter().zip(&self.values).map(|(p, v)| (v - exact(*p)).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_energy: f64,
    /// Max-norm of the energy gradient at interior nodes.
    pub residual: f64,
    pub backtracks: usize,
    pub converged: bool,
    pub gradient_steps: usize,
    pub max_shift: f64,
    pub energy_history: Vec<f64>,
    pub max_gradient_norm: f64,
    /// Elements with `|∇u| > LARGE_GRADIENT`.
    pub large_gradient_elements: usize,
    pub nodes: usize,
    pub elements: usize,
}

/// Gradient magnitude above which elements are flagged in the report.
pub const LARGE_GRADIENT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub max_backtracks: usize,
    pub armijo: f64,
    pub initial_shift: f64,
    pub max_shift: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 100, max_backtracks: 40, armijo: 1e-4, initial_shift: 1e-8, max_shift: 1e8 }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// `Σ_T |T| f(∇u|_T)`.
pub fn energy(density: &dyn Density, field: &DiscreteField) -> f64 {
    let parts: Vec<f64> = (0..field.mesh.element_count())
        .into_par_iter()
        .map(|e| field.mesh.geometry()[e].area * density.eval(field.element_gradient(e)))
        .collect();
    parts.iter().sum()
}

/// `energy(to) - energy(from)` summed element by element, which keeps
/// round-off proportional to the change rather than to the total.
fn energy_change(density: &dyn Density, from: &DiscreteField, to: &DiscreteField) -> f64 {
    let parts: Vec<f64> = (0..from.mesh.element_count())
        .into_par_iter()
        .map(|e| {
            let area = from.mesh.geometry()[e].area;
            area * (density.eval(to.element_gradient(e)) - density.eval(from.element_gradient(e)))
        })
        .collect();
    parts.iter().sum()
}

/// Element contributions `|T| Df(∇u)·∇φ_a` to the energy gradient.
fn local_gradients(density: &dyn Density, field: &DiscreteField) -> Vec<[f64; 3]> {
    (0..field.mesh.element_count())
        .into_par_iter()
        .map(|e| {
            let g = &field.mesh.geometry()[e];
            let flux = density.gradient(field.element_gradient(e)) * g.area;
            [flux.dot(&g.grads[0]), flux.dot(&g.grads[1]), flux.dot(&g.grads[2])]
        })
        .collect()
}

/// Full nodal energy gradient (boundary entries included).
pub fn energy_gradient(density: &dyn Density, field: &DiscreteField) -> Vec<f64> {
    let mut out = vec![0.0; field.mesh.node_count()];
    for (e, local) in field.mesh.elements.iter().zip(local_gradients(density, field)) {
        for a in 0..3 {
            out[e[a]] += local[a];
        }
    }
    out
}

/// Max-norm of the energy gradient restricted to interior nodes.
pub fn euler_residual(density: &dyn Density, field: &DiscreteField) -> f64 {
    let g = energy_gradient(density, field);
    field.mesh.interior_nodes().map(|i| g[i].abs()).fold(0.0, f64::max)
}

/// Interior numbering and the fixed sparsity pattern of the reduced Hessian.
struct System {
    dof: Vec<Option<usize>>,
    n: usize,
    /// Lower-triangle slots per element entry `(a, b)` with `a >= b` after
    /// mapping, or `None` when one endpoint is on the boundary.
    slots: Vec<[[Option<usize>; 3]; 3]>,
    pattern: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    entries: usize,
    symbolic: SymbolicLlt<usize>,
}

impl System {
    fn new(mesh: &Mesh) -> Result<Self> {
        let mut dof = vec![None; mesh.node_count()];
        let mut n = 0;
        for i in mesh.interior_nodes() {
            dof[i] = Some(n);
            n += 1;
        }
        let mut pairs: Vec<Pair<usize, usize>> = (0..n).map(|i| Pair { row: i, col: i }).collect();
        let mut slots = Vec::with_capacity(mesh.element_count());
        for e in &mesh.elements {
            let mut s = [[None; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    if let (Some(i), Some(j)) = (dof[e[a]], dof[e[b]]) {
                        if i >= j {
                            s[a][b] = Some(pairs.len());
                            pairs.push(Pair { row: i, col: j });
                        }
                    }
                }
            }
            slots.push(s);
        }
        let (pattern, argsort) = SymbolicSparseColMat::try_new_from_indices(n, n, &pairs)
            .map_err(|e| Error::InvalidArgument(format!("sparsity pattern: {e:?}")))?;
        let symbolic = SymbolicLlt::try_new(pattern.as_ref(), Side::Lower)
            .map_err(|e| Error::InvalidArgument(format!("symbolic factorization: {e:?}")))?;
        Ok(Self { dof, n, slots, pattern, argsort, entries: pairs.len(), symbolic })
    }

    fn hessian_values(&self, density: &dyn Density, field: &DiscreteField) -> Vec<f64> {
        let locals: Vec<Matrix3<f64>> = (0..field.mesh.element_count())
            .into_par_iter()
            .map(|e| {
                let g = &field.mesh.geometry()[e];
                let h: HessianForm = density.hessian(field.element_gradient(e));
                Matrix3::from_fn(|a, b| g.area * h.apply(&g.grads[a], &g.grads[b]))
            })
            .collect();
        let mut values = vec![0.0; self.entries];
        for (slots, local) in self.slots.iter().zip(&locals) {
            for a in 0..3 {
                for b in 0..3 {
                    if let Some(k) = slots[a][b] {
                        values[k] += local[(a, b)];
                    }
                }
            }
        }
        values
    }

    /// Solves `(H + shift I) d = rhs`; `None` when the factorization fails.
    fn solve(&self, values: &[f64], shift: f64, rhs: &[f64]) -> Option<Vec<f64>> {
        let mut shifted = values.to_vec();
        // the first n slots are the diagonal
        for v in &mut shifted[..self.n] {
            *v += shift;
        }
        let matrix = SparseColMat::new_from_argsort(self.pattern.clone(), &self.argsort, &shifted).ok()?;
        let llt = Llt::try_new_with_symbolic(self.symbolic.clone(), matrix.as_ref(), Side::Lower).ok()?;
        let b = Col::<f64>::from_fn(self.n, |i| rhs[i]);
        let x = llt.solve(&b);
        let out: Vec<f64> = (0..self.n).map(|i| x[i]).collect();
        out.iter().all(|v| v.is_finite()).then_some(out)
    }

    fn restrict(&self, full: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, d) in self.dof.iter().enumerate() {
            if let Some(d) = d {
                out[*d] = full[i];
            }
        }
        out
    }

    fn step(&self, values: &[f64], direction: &[f64], alpha: f64) -> Vec<f64> {
        let mut out = values.to_vec();
        for (i, d) in self.dof.iter().enumerate() {
            if let Some(d) = d {
                out[i] += alpha * direction[*d];
            }
        }
        out
    }
}

/// Least-squares affine fit `a x + b y + c` of the given samples.
pub fn affine_fit(points: &[Vec2], values: &[f64]) -> Option<[f64; 3]> {
    if points.len() < 3 {
        return None;
    }
    // centre the coordinates for conditioning
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vec2>() / n;
    let mut m = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (p, v) in points.iter().zip(values) {
        let row = Vector3::new(p.x - mean.x, p.y - mean.y, 1.0);
        m += row * row.transpose();
        rhs += row * *v;
    }
    let sol = m.lu().solve(&rhs)?;
    Some([sol.x, sol.y, sol.z - sol.x * mean.x - sol.y * mean.y])
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    density: &dyn Density,
    field: &DiscreteField,
    iterations: usize,
    residual: f64,
    backtracks: usize,
    converged: bool,
    gradient_steps: usize,
    max_shift: f64,
    energy_history: Vec<f64>,
) -> SolveReport {
    let norms: Vec<f64> = field.gradients().gradients.iter().map(|g| g.norm()).collect();
    SolveReport {
        iterations,
        final_energy: energy(density, field),
        residual,
        backtracks,
        converged,
        gradient_steps,
        max_shift,
        energy_history,
        max_gradient_norm: norms.iter().copied().fold(0.0, f64::max),
        large_gradient_elements: norms.iter().filter(|&&g| g > LARGE_GRADIENT).count(),
        nodes: field.mesh.node_count(),
        elements: field.mesh.element_count(),
    }
}

/// Minimizes the discrete energy with boundary values fixed to `boundary`.
///
/// Damped Newton on the interior nodes: Cholesky of the assembled Hessian
/// (shifted by `δ Id` when the factorization fails or the step is not a
/// descent direction), Armijo backtracking on the energy, and gradient steps
/// as a fallback. Interior values start from the least-squares affine fit of
/// the boundary data. Converged means the interior max-norm of the energy
/// gradient is at most `options.tol`.
pub fn minimize(
    density: &dyn Density,
    mesh: Arc<Mesh>,
    boundary: impl Fn(Vec2) -> f64,
    options: &SolveOptions,
) -> Result<(DiscreteField, SolveReport)> {
    if !(options.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", options.tol)));
    }
    let boundary_points: Vec<Vec2> = mesh.boundary_nodes.iter().map(|&i| mesh.nodes[i]).collect();
    let boundary_values: Vec<f64> = boundary_points.iter().map(|p| boundary(*p)).collect();
    let [a, b, c] = affine_fit(&boundary_points, &boundary_values).unwrap_or([0.0, 0.0, 0.0]);
    let mut values: Vec<f64> = mesh.nodes.iter().map(|p| a * p.x + b * p.y + c).collect();
    for (&i, v) in mesh.boundary_nodes.iter().zip(&boundary_values) {
        values[i] = *v;
    }
    let mut field = DiscreteField::new(mesh.clone(), values)?;
    let system = System::new(&mesh)?;

    let mut current_energy = energy(density, &field);
    let mut history = vec![current_energy];
    let (mut backtracks, mut gradient_steps, mut max_shift) = (0, 0, 0.0f64);
    let mut gradient = system.restrict(&energy_gradient(density, &field));
    let mut residual = max_abs(&gradient);

    for iteration in 0..options.max_iters {
        if residual <= options.tol || system.n == 0 {
            let report = build_report(
                density,
                &field,
                iteration,
                residual,
                backtracks,
                true,
                gradient_steps,
                max_shift,
                history,
            );
            return Ok((field, report));
        }
        let hessian = system.hessian_values(density, &field);
        let rhs: Vec<f64> = gradient.iter().map(|g| -g).collect();
        let mut shift = 0.0;
        let direction = loop {
            let candidate = system.solve(&hessian, shift, &rhs);
            if let Some(d) = candidate {
                let slope: f64 = d.iter().zip(&gradient).map(|(x, g)| x * g).sum();
                if slope < 0.0 {
                    break d;
                }
            }
            shift = if shift == 0.0 { options.initial_shift } else { shift * 10.0 };
            if shift > options.max_shift {
                if hessian.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SingularSystem { shift });
                }
                gradient_steps += 1;
                break rhs.clone();
            }
        };
        max_shift = max_shift.max(shift);
        let slope: f64 = direction.iter().zip(&gradient).map(|(x, g)| x * g).sum();
        let noise = 16.0 * f64::EPSILON * current_energy.abs().max(1.0);

        let mut alpha = 1.0;
        let mut accepted = None;
        for attempt in 0..=options.max_backtracks {
            let trial = DiscreteField { mesh: mesh.clone(), values: system.step(&field.values, &direction, alpha) };
            let change = energy_change(density, &field, &trial);
            if change <= options.armijo * alpha * slope {
                accepted = Some((trial, change));
                break;
            }
            if attempt == 0 && change.abs() <= noise {
                // energy differences are at round-off level: accept the full
                // step when it reduces the residual
                let trial_gradient = system.restrict(&energy_gradient(density, &trial));
                if max_abs(&trial_gradient) < residual {
                    accepted = Some((trial, change));
                    break;
                }
            }
            if attempt < options.max_backtracks {
                backtracks += 1;
                alpha *= 0.5;
            }
        }
        let Some((next, change)) = accepted else {
            let report = build_report(
                density,
                &field,
                iteration,
                residual,
                backtracks,
                false,
                gradient_steps,
                max_shift,
                history,
            );
            return Err(Error::NoConvergence {
                max_iters: options.max_iters,
                residual,
                best: Box::new(field),
                report: Box::new(report),
            });
        };
        debug_assert!(change <= noise, "energy increased");
        field = next;
        current_energy += change;
        history.push(current_energy);
        gradient = system.restrict(&energy_gradient(density, &field));
        residual = max_abs(&gradient);
    }
    if residual <= options.tol {
        let report = build_report(
            density,
            &field,
            options.max_iters,
            residual,
            backtracks,
            true,
            gradient_steps,
            max_shift,
            history,
        );
        return Ok((field, report));
    }
    let report = build_report(
        density,
        &field,
        options.max_iters,
        residual,
        backtracks,
        false,
        gradient_steps,
        max_shift,
        history,
    );
    Err(Error::NoConvergence {
        max_iters: options.max_iters,
        residual,
        best: Box::new(field),
        report: Box::new(report),
    })
}

/// The unique `y` with `∂f/∂p₂(a, y) = c`.
///
/// Brackets by doubling, bisects, then polishes with Newton steps on
/// `∂²f/∂p₂²`. Fails with `OutOfRange` when `c` is not strictly inside the
/// range of the map.
pub fn monotone_invert(density: &dyn Density, a: f64, c: f64) -> Result<f64> {
    if !(a.is_finite() && c.is_finite()) {
        return Err(Error::OutOfRange { a, c });
    }
    let flux = |y: f64| density.gradient(Vec2::new(a, y)).y;
    let f0 = flux(0.0);
    if c == f0 {
        return Ok(0.0);
    }
    let sign = if c > f0 { 1.0 } else { -1.0 };
    // bracket [lo, hi] in the direction of c
    let mut near = 0.0;
    let mut far = sign;
    loop {
        let v = flux(far);
        if !v.is_finite() || !far.is_finite() {
            return Err(Error::OutOfRange { a, c });
        }
        if v == c {
            // an exact hit only counts where the map still moves at round-off scale
            let slope = density.hessian(Vec2::new(a, far)).a22;
            if slope * far.abs() > 4.0 * f64::EPSILON * c.abs() {
                return Ok(far);
            }
            return Err(Error::OutOfRange { a, c });
        }
        if (v - c) * sign > 0.0 {
            break;
        }
        near = far;
        far *= 2.0;
    }
    let (mut lo, mut hi) = if sign > 0.0 { (near, far) } else { (far, near) };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-13 * (1.0 + mid.abs()) {
            break;
        }
        if flux(mid) < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..8 {
        let slope = density.hessian(Vec2::new(a, y)).a22;
        if !(slope > 0.0) {
            break;
        }
        let next = y - (flux(y) - c) / slope;
        if !(next >= lo && next <= hi) {
            break;
        }
        let done = (next - y).abs() <= 1e-15 * (1.0 + y.abs());
        y = next;
        if done {
            break;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityModel;
    use crate::mesh::{build_mesh, DomainSpec};
    use approx::assert_relative_eq;

    fn square(l: f64, h: f64) -> Arc<Mesh> {
        Arc::new(build_mesh(&DomainSpec::square(l), h).unwrap())
    }

    #[test]
    fn energy_examples() {
        let m = square(1.0, 0.25);
        let zero = DiscreteField::interpolate(m.clone(), |_| 0.0);
        assert_relative_eq!(energy(&DensityModel::MinimalSurface, &zero), 4.0, max_relative = 1e-14);
        let x1 = DiscreteField::interpolate(m, |p| p.x);
        assert_relative_eq!(energy(&DensityModel::Power { s: 2.0 }, &x1), 8.0, max_relative = 1e-14);
    }

    #[test]
    fn product_energy_converges_at_second_order() {
        let exact = 4.0 + 8.0 / 3.0;
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&h| {
                let u = DiscreteField::interpolate(square(1.0, h), |p| p.x * p.y);
                (energy(&DensityModel::Power { s: 2.0 }, &u) - exact).abs()
            })
            .collect();
        assert!(errs[1] < errs[0] / 3.0 && errs[2] < errs[1] / 3.0, "{errs:?}");
    }

    #[test]
    fn affine_data_is_reproduced_without_iterations() {
        let m = square(1.0, 0.125);
        for d in DensityModel::builtins() {
            let (u, report) =
                minimize(&d, m.clone(), |p| 2.0 * p.x - 3.0 * p.y + 1.0, &SolveOptions::default()).unwrap();
            assert!(report.converged);
            assert!(report.iterations <= 2);
            assert!(u.max_abs_error(|p| 2.0 * p.x - 3.0 * p.y + 1.0) <= 1e-12);
            assert!(euler_residual(&d, &u) <= 1e-12);
        }
    }

    #[test]
    fn product_is_discrete_harmonic_on_symmetric_mesh() {
        // the diagonal split is symmetric enough for x₁x₂ to be discrete harmonic
        let m = square(1.0, 0.1);
        let u = DiscreteField::interpolate(m, |p| p.x * p.y);
        assert!(euler_residual(&DensityModel::Power { s: 2.0 }, &u) < 1e-12);
    }

    #[test]
    fn newton_solves_nonaffine_data() {
        let m = square(1.0, 0.1);
        let d = DensityModel::NearlyLinear;
        let (u, report) =
            minimize(&d, m, |p| p.x * p.x - p.y * p.y + p.x * p.y * p.y, &SolveOptions::default()).unwrap();
        assert!(report.converged);
        assert!(euler_residual(&d, &u) <= 1e-10);
        for w in report.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
    }

    #[test]
    fn monotone_invert_examples() {
        let ms = DensityModel::MinimalSurface;
        let y = monotone_invert(&ms, 0.0, 0.5f64.sqrt()).unwrap();
        assert!((y - 1.0).abs() <= 1e-12);
        assert!(matches!(monotone_invert(&ms, 0.0, 1.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(monotone_invert(&ms, 0.0, -1.0), Err(Error::OutOfRange { .. })));
        for d in DensityModel::builtins() {
            for a in [0.0, 1.0, 10.0] {
                let c0 = d.gradient(Vec2::new(a, 0.0)).y;
                assert_eq!(monotone_invert(&d, a, c0).unwrap(), 0.0);
                for y in [-50.0, -0.3, 2.0, 700.0] {
                    let c = d.gradient(Vec2::new(a, y)).y;
                    let inv = monotone_invert(&d, a, c).unwrap();
                    assert!((inv - y).abs() <= 1e-9 * (1.0 + y.abs()), "{d} a={a} y={y} got {inv}");
                }
            }
        }
    }

    #[test]
    fn affine_fit_is_exact() {
        let pts: Vec<Vec2> = (0..10).map(|i| Vec2::new(i as f64, (i * i) as f64 * 0.1)).collect();
        let vals: Vec<f64> = pts.iter().map(|p| 3.0 * p.x - 2.0 * p.y + 7.0).collect();
        let [a, b, c] = affine_fit(&pts, &vals).unwrap();
        assert_relative_eq!(a, 3.0, epsilon = 1e-12);
        assert_relative_eq!(b, -2.0, epsilon = 1e-12);
        assert_relative_eq!(c, 7.0, epsilon = 1e-12);
    }
}
