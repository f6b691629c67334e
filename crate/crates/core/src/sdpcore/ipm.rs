//! Infeasible-start primal-dual predictor-corrector interior-point method
//! with Nesterov-Todd scaling.
//!
//! The solver works on the reduced problem obtained by eliminating equality
//! rows: minimize `c . u` subject to `S_b(u) >= 0` for affine blocks kept in
//! original-variable form. Each iteration builds the Schur complement in
//! original variables (where block coefficients are sparsest), projects it
//! onto the reduced space through the elimination map, and factors it with
//! LAPACK. Inequality rows run through the same formulas as a single
//! diagonal block with scalar arithmetic.

use nalgebra::{DMatrix, DVector};

use super::lapack::{self, Side};
use super::presolve::{Elimination, EliminationResult, eliminate};
use super::{SDPProblem, SDPSolution, SdpError, SolveOptions, SolveStatus};
use crate::momentmodel::AffineBlock;

/// Eigenvalue threshold (relative to entry scale) below which a constant
/// block certifies structural infeasibility.
const STRUCTURAL_TOL: f64 = 1e-9;

/// Dual objective magnitude treated as divergence by the infeasibility
/// heuristic.
const DUAL_DIVERGENCE: f64 = 1e8;

/// Fraction of the maximal step taken in the corrector update.
const STEP_FRACTION: f64 = 0.98;

/// Sparse symmetric coefficients of one dense block, expanded to both
/// triangles for branch-free inner loops.
struct DenseBlock {
    dim: usize,
    cmat: DMatrix<f64>,
    vars: Vec<usize>,
    ptr: Vec<usize>,
    ei: Vec<u32>,
    ej: Vec<u32>,
    ev: Vec<f64>,
}

impl DenseBlock {
    fn from_affine(b: &AffineBlock) -> DenseBlock {
        let mut cmat = DMatrix::zeros(b.dim, b.dim);
        for &(i, j, v) in &b.constant {
            cmat[(i as usize, j as usize)] += v;
            if i != j {
                cmat[(j as usize, i as usize)] += v;
            }
        }
        let mut vars = Vec::with_capacity(b.coeffs.len());
        let mut ptr = vec![0usize];
        let (mut ei, mut ej, mut ev) = (Vec::new(), Vec::new(), Vec::new());
        for (var, entries) in &b.coeffs {
            vars.push(*var);
            for &(i, j, v) in entries {
                ei.push(i);
                ej.push(j);
                ev.push(v);
                if i != j {
                    ei.push(j);
                    ej.push(i);
                    ev.push(v);
                }
            }
            ptr.push(ei.len());
        }
        DenseBlock { dim: b.dim, cmat, vars, ptr, ei, ej, ev }
    }

    /// `out = sum_x y[vars[x]] * A_x` over the full symmetric entries.
    fn scatter(&self, y: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for (k, &var) in self.vars.iter().enumerate() {
            let w = y[var];
            if w == 0.0 {
                continue;
            }
            for e in self.ptr[k]..self.ptr[k + 1] {
                out[(self.ei[e] as usize, self.ej[e] as usize)] += w * self.ev[e];
            }
        }
    }

    /// `<A_x, M>` for local variable `x`.
    fn dot(&self, x: usize, m: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for e in self.ptr[x]..self.ptr[x + 1] {
            acc += self.ev[e] * m[(self.ei[e] as usize, self.ej[e] as usize)];
        }
        acc
    }
}

/// Scalar rows bundled as one diagonal block.
struct DiagBlock {
    cvec: Vec<f64>,
    coeffs: Vec<Vec<(usize, f64)>>,
}

/// Per-iteration state of a dense block.
struct DenseState {
    s: DMatrix<f64>,
    z: DMatrix<f64>,
    ls: DMatrix<f64>,
    lz: DMatrix<f64>,
    ginv: DMatrix<f64>,
    gmat: DMatrix<f64>,
    wi: DMatrix<f64>,
    d: Vec<f64>,
    e: DMatrix<f64>,
    /// `Wi E Wi`, reused by predictor and corrector right-hand sides.
    wiewi: DMatrix<f64>,
    /// Predictor directions.
    ds_a: DMatrix<f64>,
    dz_a: DMatrix<f64>,
    /// Corrector directions.
    ds: DMatrix<f64>,
    dz: DMatrix<f64>,
    /// The `Ginv^T K Ginv` term of the current right-hand side.
    gkg: DMatrix<f64>,
}

struct DiagState {
    s: Vec<f64>,
    z: Vec<f64>,
    wi: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    ds_a: Vec<f64>,
    dz_a: Vec<f64>,
    ds: Vec<f64>,
    dz: Vec<f64>,
    kvec: Vec<f64>,
}

pub(super) fn run(p: &SDPProblem, opts: &SolveOptions) -> Result<SDPSolution, SdpError> {
    // Structural screen: constant blocks either certify infeasibility or
    // drop out (they never interact with the iteration).
    let mut dense: Vec<DenseBlock> = Vec::new();
    for b in &p.blocks {
        if b.coeffs.is_empty() {
            let scale =
                b.constant.iter().fold(0.0f64, |m, &(_, _, v)| m.max(v.abs()));
            let db = DenseBlock::from_affine(b);
            let eigs = lapack::sym_eigenvalues(&db.cmat)
                .map_err(|e| SdpError::Numerical(e.to_string()))?;
            if eigs.first().copied().unwrap_or(0.0) < -STRUCTURAL_TOL * (1.0 + scale) {
                return Ok(finish(
                    p,
                    vec![0.0; p.nvars],
                    SolveStatus::Infeasible,
                    f64::NEG_INFINITY,
                    0,
                    format!("constant block '{}' is not positive semidefinite", b.label),
                ));
            }
        } else {
            dense.push(DenseBlock::from_affine(b));
        }
    }
    let mut diag = DiagBlock { cvec: Vec::new(), coeffs: Vec::new() };
    for r in &p.ineq_rows {
        if r.coeffs.is_empty() {
            if r.constant < -STRUCTURAL_TOL * (1.0 + r.constant.abs()) {
                return Ok(finish(
                    p,
                    vec![0.0; p.nvars],
                    SolveStatus::Infeasible,
                    f64::NEG_INFINITY,
                    0,
                    "constant inequality row is negative".into(),
                ));
            }
        } else {
            diag.cvec.push(r.constant);
            diag.coeffs.push(r.coeffs.clone());
        }
    }

    // Exact equality elimination.
    let elim = match eliminate(p.nvars, &p.eq_rows) {
        EliminationResult::Contradiction { residual } => {
            return Ok(finish(
                p,
                vec![0.0; p.nvars],
                SolveStatus::Infeasible,
                f64::NEG_INFINITY,
                0,
                format!("equality rows are inconsistent (residual {residual:.3e})"),
            ));
        }
        EliminationResult::Reduced(e) => e,
    };
    let nfree = elim.free.len();
    let mut c_orig = vec![0.0; p.nvars];
    for &(v, c) in &p.objective {
        c_orig[v] += c;
    }
    let chat = elim.project(&c_orig);
    let shift: f64 =
        p.obj_constant + c_orig.iter().zip(&elim.y0).map(|(a, b)| a * b).sum::<f64>();

    if nfree == 0 {
        // Fully pinned problem: just evaluate feasibility at y0.
        let y = elim.y0.clone();
        let sol = finish(p, y, SolveStatus::Optimal, shift, 0, "all variables pinned".into());
        let scale = 1.0 + problem_scale(&dense, &diag, &elim.y0);
        let feasible = sol.max_psd_violation >= -opts.feas_tol * scale
            && sol.max_equality_residual <= opts.feas_tol * scale;
        if feasible {
            return Ok(sol);
        }
        return Ok(SDPSolution {
            status: SolveStatus::Infeasible,
            dual_objective: f64::NEG_INFINITY,
            metadata: "pinned variables violate the constraints".into(),
            ..sol
        });
    }

    // Interior starting point.
    let mut u = vec![0.0; nfree];
    let mut y = elim.expand(&u);
    let cscale = problem_scale(&dense, &diag, &y);
    let chat_inf = chat.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let zinit = 1.0 + chat_inf;
    let mut dstates: Vec<DenseState> = Vec::with_capacity(dense.len());
    let mut scratch = Vec::new();
    for b in &dense {
        let mut m0 = DMatrix::zeros(b.dim, b.dim);
        b.scatter(&y, &mut m0);
        m0 += &b.cmat;
        let sinit = 10.0 * (1.0 + m0.norm());
        dstates.push(DenseState {
            s: DMatrix::identity(b.dim, b.dim) * sinit,
            z: DMatrix::identity(b.dim, b.dim) * zinit,
            ls: DMatrix::zeros(b.dim, b.dim),
            lz: DMatrix::zeros(b.dim, b.dim),
            ginv: DMatrix::zeros(b.dim, b.dim),
            gmat: DMatrix::zeros(b.dim, b.dim),
            wi: DMatrix::zeros(b.dim, b.dim),
            d: vec![0.0; b.dim],
            e: DMatrix::zeros(b.dim, b.dim),
            wiewi: DMatrix::zeros(b.dim, b.dim),
            ds_a: DMatrix::zeros(b.dim, b.dim),
            dz_a: DMatrix::zeros(b.dim, b.dim),
            ds: DMatrix::zeros(b.dim, b.dim),
            dz: DMatrix::zeros(b.dim, b.dim),
            gkg: DMatrix::zeros(b.dim, b.dim),
        });
        scratch.push(DMatrix::<f64>::zeros(b.dim, b.dim));
    }
    let ndiag = diag.cvec.len();
    let mut gstate = DiagState {
        s: diag
            .coeffs
            .iter()
            .zip(&diag.cvec)
            .map(|(row, c)| {
                let v: f64 = c + row.iter().map(|&(x, a)| a * y[x]).sum::<f64>();
                10.0 * (1.0 + v.abs())
            })
            .collect(),
        z: vec![zinit; ndiag],
        wi: vec![0.0; ndiag],
        d: vec![0.0; ndiag],
        e: vec![0.0; ndiag],
        ds_a: vec![0.0; ndiag],
        dz_a: vec![0.0; ndiag],
        ds: vec![0.0; ndiag],
        dz: vec![0.0; ndiag],
        kvec: vec![0.0; ndiag],
    };
    let ntot: usize = dense.iter().map(|b| b.dim).sum::<usize>() + ndiag;
    if ntot == 0 {
        // No conic part at all: the minimum over an affine space is at y0
        // unless the objective is nonzero on a free direction.
        let unbounded = chat.iter().any(|&c| c.abs() > 1e-12);
        let status = if unbounded { SolveStatus::MaxIter } else { SolveStatus::Optimal };
        return Ok(finish(p, y, status, shift, 0, "no conic constraints".into()));
    }

    let mut h = DMatrix::<f64>::zeros(p.nvars, p.nvars);
    let mut hhat = DMatrix::<f64>::zeros(nfree, nfree);
    let mut hcol = vec![0.0; p.nvars];
    let mut v_orig = vec![0.0; p.nvars];
    let mut r_orig = vec![0.0; p.nvars];
    let mut iterations = 0usize;
    let mut best_pinf = f64::INFINITY;
    let mut stalled_pinf = 0usize;
    let mut dual_objective = f64::NEG_INFINITY;
    let mut status = SolveStatus::MaxIter;
    let mut note = String::from("iteration limit reached");

    for it in 0..=opts.max_iter {
        iterations = it;
        // Residuals and merit quantities.
        v_orig.fill(0.0);
        let mut czdot = 0.0;
        let mut sz = 0.0;
        let mut pinf: f64 = 0.0;
        let mut snorm2 = 0.0;
        let mut znorm2 = 0.0;
        for (b, st) in dense.iter().zip(dstates.iter_mut()) {
            b.scatter(&y, &mut st.e);
            st.e += &b.cmat;
            st.e -= &st.s;
            pinf = pinf.max(st.e.amax());
            for (k, &var) in b.vars.iter().enumerate() {
                v_orig[var] += b.dot(k, &st.z);
            }
            czdot += b.cmat.dot(&st.z);
            sz += st.s.dot(&st.z);
            snorm2 += st.s.norm_squared();
            znorm2 += st.z.norm_squared();
        }
        for k in 0..ndiag {
            let val: f64 =
                diag.cvec[k] + diag.coeffs[k].iter().map(|&(x, a)| a * y[x]).sum::<f64>();
            gstate.e[k] = val - gstate.s[k];
            pinf = pinf.max(gstate.e[k].abs());
            for &(x, a) in &diag.coeffs[k] {
                v_orig[x] += a * gstate.z[k];
            }
            czdot += diag.cvec[k] * gstate.z[k];
            sz += gstate.s[k] * gstate.z[k];
            snorm2 += gstate.s[k] * gstate.s[k];
            znorm2 += gstate.z[k] * gstate.z[k];
        }
        let vhat = elim.project(&v_orig);
        let dinf = chat
            .iter()
            .zip(&vhat)
            .fold(0.0f64, |m, (c, v)| m.max((c - v).abs()))
            / (1.0 + chat_inf);
        pinf /= 1.0 + cscale;
        let pobj = p.objective_value(&y);
        let y0v: f64 = elim.y0.iter().zip(&v_orig).map(|(a, b)| a * b).sum();
        let dobj = -(czdot + y0v) + shift;
        dual_objective = dobj;
        let mu = sz / ntot as f64;
        let gap = sz / (1.0 + pobj.abs() + dobj.abs());

        if pinf <= opts.feas_tol && dinf <= opts.feas_tol && gap <= opts.gap_tol {
            status = SolveStatus::Optimal;
            note = format!("converged: pinf={pinf:.2e} dinf={dinf:.2e} gap={gap:.2e}");
            break;
        }
        // Problems without a strictly feasible point can stop being
        // factorable just short of full tolerance; abnormal exits keep the
        // current point when it is already acceptable.
        let relaxed_ok = pinf <= 1e2 * opts.feas_tol
            && dinf <= 1e2 * opts.feas_tol
            && gap <= 1e2 * opts.gap_tol;
        // When the dual optimum is unattained no bounded multiplier can
        // certify, so `dinf` stalls; a primal-feasible iterate is still
        // accepted once the objective gap and the scale-invariant
        // complementarity have both vanished. The gap condition is essential:
        // complementarity alone also vanishes along diverging dual rays.
        let comp = sz.abs() / (1.0 + (snorm2 * znorm2).sqrt());
        let primal_ok = pinf <= 1e2 * opts.feas_tol
            && gap <= 1e2 * opts.gap_tol
            && comp <= 1e2 * opts.gap_tol;
        let residual_note = format!(
            "pinf={pinf:.2e} dinf={dinf:.2e} gap={gap:.2e} comp={comp:.2e} pobj={pobj:.9e}"
        );
        if std::env::var_os("FACRANK_IPM_TRACE").is_some() {
            eprintln!(
                "it={it} pobj={pobj:.9e} dobj={dobj:.9e} pinf={pinf:.2e} dinf={dinf:.2e} gap={gap:.2e} mu={mu:.2e} comp={comp:.2e}"
            );
        }
        if it == opts.max_iter {
            if relaxed_ok {
                status = SolveStatus::Optimal;
                note = format!("converged within relaxed tolerance ({residual_note})");
            } else if primal_ok {
                status = SolveStatus::Optimal;
                note = format!("primal converged without a dual certificate ({residual_note})");
            } else {
                status = SolveStatus::MaxIter;
                note = format!("iteration limit reached ({residual_note})");
            }
            break;
        }
        if pinf < 0.5 * best_pinf {
            best_pinf = pinf;
            stalled_pinf = 0;
        } else {
            stalled_pinf += 1;
        }
        if dobj > DUAL_DIVERGENCE * (1.0 + shift.abs())
            && pinf > 1e3 * opts.feas_tol
            && stalled_pinf >= 3
        {
            status = SolveStatus::Infeasible;
            note = format!(
                "dual objective diverged ({dobj:.3e}) while primal infeasibility stalled at {pinf:.3e}"
            );
            break;
        }

        // Nesterov-Todd scaling per block.
        let mut breakdown = None;
        for (b, st) in dense.iter().zip(dstates.iter_mut()) {
            if let Err(msg) = nt_scale(b.dim, st) {
                breakdown = Some(msg);
                break;
            }
        }
        if let Some(msg) = breakdown {
            if relaxed_ok {
                status = SolveStatus::Optimal;
                note = format!("converged within relaxed tolerance ({residual_note}): {msg}");
            } else if primal_ok {
                status = SolveStatus::Optimal;
                note = format!(
                    "primal converged without a dual certificate ({residual_note}): {msg}"
                );
            } else {
                status = SolveStatus::MaxIter;
                note = format!("numerical breakdown in scaling ({residual_note}): {msg}");
            }
            break;
        }
        for k in 0..ndiag {
            gstate.wi[k] = (gstate.z[k] / gstate.s[k]).sqrt();
            gstate.d[k] = (gstate.z[k] * gstate.s[k]).sqrt();
        }

        // Schur complement in original variables, projected and factored.
        h.fill(0.0);
        for (b, st) in dense.iter().zip(dstates.iter()) {
            assemble_dense(b, &st.wi, &mut h);
        }
        for k in 0..ndiag {
            let w2 = gstate.wi[k] * gstate.wi[k];
            for (a_idx, &(x, ax)) in diag.coeffs[k].iter().enumerate() {
                for &(y2, ay) in &diag.coeffs[k][a_idx..] {
                    let (lo, hi) = if x <= y2 { (x, y2) } else { (y2, x) };
                    h[(lo, hi)] += w2 * ax * ay;
                }
            }
        }
        for i in 0..p.nvars {
            for j in 0..i {
                h[(i, j)] = h[(j, i)];
            }
        }
        for jf in 0..nfree {
            hcol.fill(0.0);
            for &(x, cx) in &elim.cols[jf] {
                let col = h.column(x);
                for (out, cv) in hcol.iter_mut().zip(col.iter()) {
                    *out += cx * cv;
                }
            }
            for if_ in 0..=jf {
                let dotv: f64 = elim.cols[if_].iter().map(|&(x, cx)| cx * hcol[x]).sum();
                hhat[(if_, jf)] = dotv;
                hhat[(jf, if_)] = dotv;
            }
        }
        let lhat = match factor_schur(&hhat) {
            Ok(l) => l,
            Err(msg) => {
                if relaxed_ok {
                    status = SolveStatus::Optimal;
                    note =
                        format!("converged within relaxed tolerance ({residual_note}): {msg}");
                } else if primal_ok {
                    status = SolveStatus::Optimal;
                    note = format!(
                        "primal converged without a dual certificate ({residual_note}): {msg}"
                    );
                } else {
                    status = SolveStatus::MaxIter;
                    note = format!("Schur factorization failed ({residual_note}): {msg}");
                }
                break;
            }
        };

        // Predictor (affine scaling step).
        r_orig.fill(0.0);
        for (bi, (b, st)) in dense.iter().zip(dstates.iter_mut()).enumerate() {
            // wiewi = Wi E Wi
            lapack::gemm(1.0, &st.wi, false, &st.e, false, 0.0, &mut scratch[bi]);
            lapack::gemm(1.0, &scratch[bi], false, &st.wi, false, 0.0, &mut st.wiewi);
            symmetrize(&mut st.wiewi);
            for (k, &var) in b.vars.iter().enumerate() {
                r_orig[var] += -b.dot(k, &st.z) - b.dot(k, &st.wiewi);
            }
        }
        for k in 0..ndiag {
            let pk = -gstate.z[k] - gstate.wi[k] * gstate.wi[k] * gstate.e[k];
            for &(x, a) in &diag.coeffs[k] {
                r_orig[x] += a * pk;
            }
        }
        let mut rhs: Vec<f64> = elim
            .project(&r_orig)
            .iter()
            .zip(&chat)
            .zip(&vhat)
            .map(|((r, c), v)| r - (c - v))
            .collect();
        solve_inplace(&lhat, &hhat, &mut rhs);
        let du_a = rhs;
        let dy_a = apply_linear(&elim, &du_a);
        for (bi, (b, st)) in dense.iter().zip(dstates.iter_mut()).enumerate() {
            b.scatter(&dy_a, &mut st.ds_a);
            let (ds_a, e, wi, z, wiewi) = (&mut st.ds_a, &st.e, &st.wi, &st.z, &st.wiewi);
            *ds_a += e;
            // dz_a = -Z - wiewi - Wi (ds_a - E) Wi = -Z - Wi ds_a Wi
            lapack::gemm(1.0, wi, false, ds_a, false, 0.0, &mut scratch[bi]);
            lapack::gemm(1.0, &scratch[bi], false, wi, false, 0.0, &mut st.dz_a);
            let _ = wiewi;
            st.dz_a = -(&st.dz_a) - z;
            symmetrize(&mut st.dz_a);
        }
        for k in 0..ndiag {
            let row: f64 = diag.coeffs[k].iter().map(|&(x, a)| a * dy_a[x]).sum();
            gstate.ds_a[k] = gstate.e[k] + row;
            gstate.dz_a[k] = -gstate.z[k] - gstate.wi[k] * gstate.wi[k] * gstate.ds_a[k];
        }
        let (ap_max, ad_max) = max_steps(&dense, &mut dstates, &gstate, true)?;
        let ap = ap_max.min(1.0);
        let ad = ad_max.min(1.0);
        let mut sz_aff = 0.0;
        for st in &dstates {
            sz_aff += (&st.s + &st.ds_a * ap).dot(&(&st.z + &st.dz_a * ad));
        }
        for k in 0..ndiag {
            sz_aff += (gstate.s[k] + ap * gstate.ds_a[k]) * (gstate.z[k] + ad * gstate.dz_a[k]);
        }
        let mu_aff = (sz_aff / ntot as f64).max(0.0);
        let sigma = ((mu_aff / mu).powi(3)).clamp(1e-10, 1.0);

        // Corrector.
        r_orig.fill(0.0);
        for (bi, (b, st)) in dense.iter().zip(dstates.iter_mut()).enumerate() {
            // Scaled affine products for the second-order term.
            // shat = Ginv ds_a Ginv^T, zhat = G^T dz_a G
            lapack::gemm(1.0, &st.ginv, false, &st.ds_a, false, 0.0, &mut scratch[bi]);
            let mut shat = DMatrix::zeros(b.dim, b.dim);
            lapack::gemm(1.0, &scratch[bi], false, &st.ginv, true, 0.0, &mut shat);
            lapack::gemm(1.0, &st.gmat, true, &st.dz_a, false, 0.0, &mut scratch[bi]);
            let mut zhat = DMatrix::zeros(b.dim, b.dim);
            lapack::gemm(1.0, &scratch[bi], false, &st.gmat, false, 0.0, &mut zhat);
            // K = Ld^{-1}(sigma mu I - D^2 - sym(shat zhat))
            let mut kmat = DMatrix::zeros(b.dim, b.dim);
            lapack::gemm(1.0, &shat, false, &zhat, false, 0.0, &mut kmat);
            symmetrize(&mut kmat);
            kmat.neg_mut();
            for k in 0..b.dim {
                kmat[(k, k)] += sigma * mu - st.d[k] * st.d[k];
            }
            for i in 0..b.dim {
                for j in 0..b.dim {
                    kmat[(i, j)] *= 2.0 / (st.d[i] + st.d[j]);
                }
            }
            // gkg = Ginv^T K Ginv
            lapack::gemm(1.0, &st.ginv, true, &kmat, false, 0.0, &mut scratch[bi]);
            lapack::gemm(1.0, &scratch[bi], false, &st.ginv, false, 0.0, &mut st.gkg);
            symmetrize(&mut st.gkg);
            for (k, &var) in b.vars.iter().enumerate() {
                r_orig[var] += b.dot(k, &st.gkg) - b.dot(k, &st.wiewi);
            }
        }
        for k in 0..ndiag {
            let rhat = sigma * mu
                - gstate.d[k] * gstate.d[k]
                - gstate.ds_a[k] * gstate.dz_a[k];
            gstate.kvec[k] = rhat / gstate.d[k];
            let pk = gstate.kvec[k] * gstate.wi[k]
                - gstate.wi[k] * gstate.wi[k] * gstate.e[k];
            for &(x, a) in &diag.coeffs[k] {
                r_orig[x] += a * pk;
            }
        }
        let mut rhs2: Vec<f64> = elim
            .project(&r_orig)
            .iter()
            .zip(&chat)
            .zip(&vhat)
            .map(|((r, c), v)| r - (c - v))
            .collect();
        solve_inplace(&lhat, &hhat, &mut rhs2);
        let du = rhs2;
        let dy = apply_linear(&elim, &du);
        for (bi, (b, st)) in dense.iter().zip(dstates.iter_mut()).enumerate() {
            b.scatter(&dy, &mut st.ds);
            st.ds += &st.e;
            lapack::gemm(1.0, &st.wi, false, &st.ds, false, 0.0, &mut scratch[bi]);
            let mut wdw = DMatrix::zeros(b.dim, b.dim);
            lapack::gemm(1.0, &scratch[bi], false, &st.wi, false, 0.0, &mut wdw);
            st.dz = &st.gkg - wdw;
            symmetrize(&mut st.dz);
            symmetrize(&mut st.ds);
        }
        for k in 0..ndiag {
            let row: f64 = diag.coeffs[k].iter().map(|&(x, a)| a * dy[x]).sum();
            gstate.ds[k] = gstate.e[k] + row;
            gstate.dz[k] = gstate.kvec[k] * gstate.wi[k]
                - gstate.wi[k] * gstate.wi[k] * gstate.ds[k];
        }
        let (ap_max, ad_max) = max_steps(&dense, &mut dstates, &gstate, false)?;
        let ap = (STEP_FRACTION * ap_max).min(1.0);
        let ad = (STEP_FRACTION * ad_max).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            if relaxed_ok {
                status = SolveStatus::Optimal;
                note = format!("converged within relaxed tolerance ({residual_note})");
            } else if primal_ok {
                status = SolveStatus::Optimal;
                note = format!("primal converged without a dual certificate ({residual_note})");
            } else {
                status = SolveStatus::MaxIter;
                note = format!("step sizes collapsed at iteration {it} ({residual_note})");
            }
            break;
        }
        for (uk, dk) in u.iter_mut().zip(&du) {
            *uk += ap * dk;
        }
        y = elim.expand(&u);
        for st in dstates.iter_mut() {
            let (s, ds) = (&mut st.s, &st.ds);
            *s += ds * ap;
            let (z, dz) = (&mut st.z, &st.dz);
            *z += dz * ad;
        }
        for k in 0..ndiag {
            gstate.s[k] += ap * gstate.ds[k];
            gstate.z[k] += ad * gstate.dz[k];
        }
        iterations = it + 1;
    }

    Ok(finish(p, y, status, dual_objective, iterations, note))
}

/// Computes the NT scaling quantities of one dense block.
fn nt_scale(dim: usize, st: &mut DenseState) -> Result<(), String> {
    factor_iterate(&mut st.ls, &mut st.s, "slack")?;
    factor_iterate(&mut st.lz, &mut st.z, "dual")?;
    // M = Lz^T Ls, SVD M = U diag(d) V^T.
    let mut m = DMatrix::zeros(dim, dim);
    lapack::gemm(1.0, &st.lz, true, &st.ls, false, 0.0, &mut m);
    let (_, dvals, vt) = lapack::svd(&m).map_err(|e| e.to_string())?;
    st.d = dvals;
    for dk in &mut st.d {
        *dk = dk.max(1e-150);
    }
    // G = Ls V diag(d^{-1/2}); Ginv = diag(d^{1/2}) V^T Ls^{-1}.
    lapack::gemm(1.0, &st.ls, false, &vt, true, 0.0, &mut st.gmat);
    for k in 0..dim {
        let sc = 1.0 / st.d[k].sqrt();
        st.gmat.column_mut(k).scale_mut(sc);
    }
    st.ginv.copy_from(&vt);
    lapack::trsm(Side::Right, false, &st.ls, &mut st.ginv);
    for k in 0..dim {
        let sc = st.d[k].sqrt();
        st.ginv.row_mut(k).scale_mut(sc);
    }
    // Wi = Ginv^T Ginv.
    let ginv = st.ginv.clone();
    lapack::gemm(1.0, &ginv, true, &ginv, false, 0.0, &mut st.wi);
    symmetrize(&mut st.wi);
    Ok(())
}

/// Accumulates `<A_x, Wi A_y Wi>` over all variable pairs of one block into
/// the dense Schur matrix (upper triangle).
fn assemble_dense(b: &DenseBlock, wi: &DMatrix<f64>, h: &mut DMatrix<f64>) {
    let dim = b.dim;
    let wi_slice = wi.as_slice();
    let nv = b.vars.len();
    for a in 0..nv {
        let ra = b.ptr[a]..b.ptr[a + 1];
        let (ia, ja, va) = (&b.ei[ra.clone()], &b.ej[ra.clone()], &b.ev[ra]);
        for bb in a..nv {
            let rb = b.ptr[bb]..b.ptr[bb + 1];
            let (ib, jb, vb) = (&b.ei[rb.clone()], &b.ej[rb.clone()], &b.ev[rb]);
            let mut acc = 0.0;
            for t in 0..ia.len() {
                // Wi is symmetric; rows double as columns.
                let wrow_i = &wi_slice[(ia[t] as usize) * dim..];
                let wrow_j = &wi_slice[(ja[t] as usize) * dim..];
                let vat = va[t];
                let mut inner = 0.0;
                for s in 0..ib.len() {
                    inner += vb[s] * wrow_i[ib[s] as usize] * wrow_j[jb[s] as usize];
                }
                acc += vat * inner;
            }
            let (x, y) = (b.vars[a], b.vars[bb]);
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            h[(lo, hi)] += acc;
        }
    }
}

/// Cholesky of a nominally positive definite iterate, retrying with an
/// escalating diagonal shift when problems without a strictly feasible
/// point push an eigenvalue across zero through rounding. Any shift is
/// folded back into the iterate itself so subsequent line searches measure
/// steps from the factored point; otherwise the overshoot compounds.
fn factor_iterate(
    dst: &mut DMatrix<f64>,
    src: &mut DMatrix<f64>,
    what: &str,
) -> Result<(), String> {
    let n = src.nrows();
    let mean_diag = (src.diagonal().sum() / n as f64).abs().max(1e-300);
    let mut shift = 0.0;
    for attempt in 0..4 {
        dst.copy_from(src);
        if shift > 0.0 {
            for k in 0..n {
                dst[(k, k)] += shift;
            }
        }
        if lapack::cholesky_lower(dst).is_ok() {
            if shift > 0.0 {
                for k in 0..n {
                    src[(k, k)] += shift;
                }
            }
            return Ok(());
        }
        shift = mean_diag * 1e-14 * 100f64.powi(attempt);
    }
    // Rounding carried the iterate past ridge range: move the whole
    // spectrum back inside the cone.
    let eigs = lapack::sym_eigenvalues(src).map_err(|e| e.to_string())?;
    let lmin = eigs.first().copied().unwrap_or(0.0);
    let lift = (-lmin).max(0.0) * (1.0 + 1e-6) + mean_diag * 1e-12;
    for k in 0..n {
        src[(k, k)] += lift;
    }
    dst.copy_from(src);
    if lapack::cholesky_lower(dst).is_ok() {
        return Ok(());
    }
    Err(format!("{what} block lost definiteness"))
}

/// Factored form of the (Jacobi-scaled) Schur complement.
///
/// The Schur matrix is PSD in exact arithmetic but its diagonal can span
/// many orders of magnitude near termination, so it is normalized to unit
/// diagonal before factoring. A Cholesky with escalating ridge handles the
/// usual rounding-level indefiniteness; when even that fails the clamped
/// eigendecomposition still yields a usable positive definite solve.
enum SchurFactor {
    Chol { l: DMatrix<f64>, scale: Vec<f64> },
    Eigen { vecs: DMatrix<f64>, inv: Vec<f64>, scale: Vec<f64> },
}

impl SchurFactor {
    fn solve(&self, rhs: &mut [f64]) {
        match self {
            SchurFactor::Chol { l, scale } => {
                let n = l.nrows();
                let mut b = DMatrix::from_fn(n, 1, |k, _| rhs[k] * scale[k]);
                lapack::cholesky_solve(l, &mut b).expect("triangular solves cannot fail");
                for k in 0..n {
                    rhs[k] = b[(k, 0)] * scale[k];
                }
            }
            SchurFactor::Eigen { vecs, inv, scale } => {
                let n = vecs.nrows();
                let b = DVector::from_fn(n, |k, _| rhs[k] * scale[k]);
                let mut c = vecs.transpose() * b;
                for (ck, ik) in c.iter_mut().zip(inv) {
                    *ck *= ik;
                }
                let x = vecs * c;
                for k in 0..n {
                    rhs[k] = x[k] * scale[k];
                }
            }
        }
    }
}

fn factor_schur(hhat: &DMatrix<f64>) -> Result<SchurFactor, String> {
    let n = hhat.nrows();
    let dmax = hhat.diagonal().iter().copied().fold(0.0f64, f64::max).max(1e-300);
    let scale: Vec<f64> =
        (0..n).map(|k| 1.0 / hhat[(k, k)].max(dmax * 1e-30).sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| hhat[(i, j)] * scale[i] * scale[j]);
    let mut ridge = 0.0;
    for attempt in 0..5 {
        let mut l = scaled.clone();
        if ridge > 0.0 {
            for k in 0..n {
                l[(k, k)] += ridge;
            }
        }
        if lapack::cholesky_lower(&mut l).is_ok() {
            return Ok(SchurFactor::Chol { l, scale });
        }
        ridge = 1e-14 * 100f64.powi(attempt);
    }
    let (eigs, vecs) = lapack::sym_eigen(&scaled)
        .map_err(|e| format!("Schur complement is numerically singular: {e}"))?;
    let lmax = eigs.iter().copied().fold(0.0f64, f64::max).max(1e-300);
    let clip = lmax * 1e-14;
    let inv: Vec<f64> = eigs.iter().map(|&l| 1.0 / l.max(clip)).collect();
    Ok(SchurFactor::Eigen { vecs, inv, scale })
}

/// Solves `hhat x = rhs` through the factor with one round of iterative
/// refinement; the refinement recovers the digits the ridge or eigenvalue
/// clamp gave up.
fn solve_inplace(f: &SchurFactor, hhat: &DMatrix<f64>, rhs: &mut [f64]) {
    let b = DVector::from_column_slice(rhs);
    f.solve(rhs);
    let x = DVector::from_column_slice(rhs);
    let mut r = b - hhat * &x;
    f.solve(r.as_mut_slice());
    for (out, (xk, dk)) in rhs.iter_mut().zip(x.iter().zip(r.iter())) {
        *out = xk + dk;
    }
}

/// `Z u` without the constant part: maps direction vectors.
fn apply_linear(elim: &Elimination, u: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; elim.nvars];
    for (v, row) in elim.rows.iter().enumerate() {
        for &(j, c) in row {
            y[v] += c * u[j];
        }
    }
    y
}

/// Largest feasible steps for `S + a dS` and `Z + a dZ` over all blocks.
fn max_steps(
    dense: &[DenseBlock],
    dstates: &mut [DenseState],
    gstate: &DiagState,
    affine: bool,
) -> Result<(f64, f64), SdpError> {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for (b, st) in dense.iter().zip(dstates.iter()) {
        let (ds, dz) = if affine { (&st.ds_a, &st.dz_a) } else { (&st.ds, &st.dz) };
        ap = ap.min(psd_max_step(&st.ls, ds, b.dim)?);
        ad = ad.min(psd_max_step(&st.lz, dz, b.dim)?);
    }
    for k in 0..gstate.s.len() {
        let (ds, dz) = if affine {
            (gstate.ds_a[k], gstate.dz_a[k])
        } else {
            (gstate.ds[k], gstate.dz[k])
        };
        if ds < 0.0 {
            ap = ap.min(-gstate.s[k] / ds);
        }
        if dz < 0.0 {
            ad = ad.min(-gstate.z[k] / dz);
        }
    }
    Ok((ap, ad))
}

/// Largest `a` keeping `M + a dM` positive definite, given `M`'s Cholesky
/// factor: `-1/lambda_min(L^{-1} dM L^{-T})` when that eigenvalue is
/// negative.
fn psd_max_step(l: &DMatrix<f64>, dm: &DMatrix<f64>, _dim: usize) -> Result<f64, SdpError> {
    let mut t = dm.clone();
    lapack::trsm(Side::Left, false, l, &mut t);
    lapack::trsm(Side::Right, true, l, &mut t);
    symmetrize(&mut t);
    let eigs = lapack::sym_eigenvalues(&t).map_err(|e| SdpError::Numerical(e.to_string()))?;
    let lmin = eigs.first().copied().unwrap_or(0.0);
    if lmin >= -1e-13 {
        Ok(f64::INFINITY)
    } else {
        Ok(-1.0 / lmin)
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest constant-entry magnitude across the conic parts at `y0`; used to
/// scale relative residuals.
fn problem_scale(dense: &[DenseBlock], diag: &DiagBlock, y0: &[f64]) -> f64 {
    let mut scale = 0.0f64;
    for b in dense {
        let mut m = DMatrix::zeros(b.dim, b.dim);
        b.scatter(y0, &mut m);
        m += &b.cmat;
        scale = scale.max(m.amax());
    }
    for (row, c) in diag.coeffs.iter().zip(&diag.cvec) {
        let v: f64 = c + row.iter().map(|&(x, a)| a * y0[x]).sum::<f64>();
        scale = scale.max(v.abs());
    }
    scale
}

/// Builds the solution record, measuring exact residuals on the original
/// problem at `y`.
fn finish(
    p: &SDPProblem,
    y: Vec<f64>,
    status: SolveStatus,
    dual_objective: f64,
    iterations: usize,
    note: String,
) -> SDPSolution {
    let mut max_psd_violation = 0.0f64;
    for b in &p.blocks {
        let m = b.eval(&y);
        if let Ok(eigs) = lapack::sym_eigenvalues(&m) {
            if let Some(&lmin) = eigs.first() {
                max_psd_violation = max_psd_violation.min(lmin);
            }
        }
    }
    for r in &p.ineq_rows {
        max_psd_violation = max_psd_violation.min(r.eval(&y));
    }
    let max_equality_residual =
        p.eq_rows.iter().fold(0.0f64, |m, r| m.max(r.eval(&y).abs()));
    SDPSolution {
        primal_objective: p.objective_value(&y),
        y,
        status,
        dual_objective,
        max_psd_violation,
        max_equality_residual,
        iterations,
        metadata: note,
    }
}
