//! Sparse SDPA interchange: writer and reader.
//!
//! The on-disk form is the classic sparse format: four header lines (variable
//! count, block count, block sizes with negative sizes marking diagonal
//! blocks, objective vector) followed by entry lines `matno blkno i j value`
//! with 1-based upper-triangular indices. Matrix 0 holds `-C`; matrix `k`
//! holds the coefficient of variable `k`, so the constraint reads
//! `sum_k y_k F_k - F_0 >= 0`, matching the dual-LMI block form.
//!
//! Inequality rows map onto one trailing diagonal block. Equality rows are
//! written as paired opposite inequalities; in the annotated dialect a
//! comment line records each pair so the reader can reconstruct the original
//! equality rows exactly. Comments, the objective constant, and metadata ride
//! in `*`-prefixed header comments, which standard readers skip.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::SDPProblem;
use crate::momentmodel::{AffineBlock, LinearRow, RowSense};

/// How equality rows are encoded in the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SdpaEqualities {
    /// Paired inequalities plus `*eqpair` comments; our reader reconstructs
    /// the equality rows exactly and other readers see valid plain SDPA.
    #[default]
    Annotated,
    /// Paired inequalities with no annotations (pure interchange text).
    Paired,
}

/// Writes the problem in sparse SDPA form with the default (annotated)
/// equality encoding.
pub fn export_sdpa(p: &SDPProblem) -> String {
    export_sdpa_with(p, SdpaEqualities::Annotated)
}

/// Writes the problem in sparse SDPA form with an explicit equality
/// encoding. Output is deterministic: identical problems produce identical
/// bytes.
pub fn export_sdpa_with(p: &SDPProblem, eqmode: SdpaEqualities) -> String {
    let mut out = String::new();
    // Rows of the trailing diagonal block: inequalities, then +/- pairs.
    let mut diag_rows: Vec<&LinearRow> = p.ineq_rows.iter().collect();
    let mut negated: Vec<LinearRow> = Vec::with_capacity(p.eq_rows.len());
    for r in &p.eq_rows {
        negated.push(LinearRow {
            coeffs: r.coeffs.iter().map(|&(v, c)| (v, -c)).collect(),
            constant: -r.constant,
            sense: RowSense::GeqZero,
        });
    }
    let first_pair = diag_rows.len();
    for (r, n) in p.eq_rows.iter().zip(&negated) {
        diag_rows.push(r);
        diag_rows.push(n);
    }

    if p.obj_constant != 0.0 {
        let _ = writeln!(out, "*objconst {}", fmt(p.obj_constant));
    }
    if !p.metadata.is_empty() {
        for line in p.metadata.lines() {
            let _ = writeln!(out, "*meta {line}");
        }
    }
    let diag_blkno = p.blocks.len() + 1;
    if eqmode == SdpaEqualities::Annotated {
        for k in 0..p.eq_rows.len() {
            let _ = writeln!(
                out,
                "*eqpair {} {} {}",
                diag_blkno,
                first_pair + 2 * k + 1,
                first_pair + 2 * k + 2
            );
        }
    }

    let nblocks = p.blocks.len() + usize::from(!diag_rows.is_empty());
    let _ = writeln!(out, "{}", p.nvars);
    let _ = writeln!(out, "{nblocks}");
    let mut sizes: Vec<String> = p.blocks.iter().map(|b| b.dim.to_string()).collect();
    if !diag_rows.is_empty() {
        sizes.push(format!("-{}", diag_rows.len()));
    }
    let _ = writeln!(out, "{}", sizes.join(" "));
    let mut c = vec![0.0; p.nvars];
    for &(v, coef) in &p.objective {
        c[v] += coef;
    }
    let _ = writeln!(out, "{}", c.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(" "));

    // Entries grouped by matrix number, then block, then position.
    let emit = |matno: usize, blkno: usize, i: usize, j: usize, v: f64, out: &mut String| {
        if v != 0.0 {
            let _ = writeln!(out, "{matno} {blkno} {i} {j} {}", fmt(v));
        }
    };
    for (bi, b) in p.blocks.iter().enumerate() {
        for &(i, j, v) in &b.constant {
            // F0 = -C
            emit(0, bi + 1, i as usize + 1, j as usize + 1, -v, &mut out);
        }
    }
    for (k, r) in diag_rows.iter().enumerate() {
        emit(0, diag_blkno, k + 1, k + 1, -r.constant, &mut out);
    }
    for var in 0..p.nvars {
        for (bi, b) in p.blocks.iter().enumerate() {
            if let Some(entries) = b.coeffs_of(var) {
                for &(i, j, v) in entries {
                    emit(var + 1, bi + 1, i as usize + 1, j as usize + 1, v, &mut out);
                }
            }
        }
        for (k, r) in diag_rows.iter().enumerate() {
            if let Ok(idx) = r.coeffs.binary_search_by_key(&var, |&(v, _)| v) {
                emit(var + 1, diag_blkno, k + 1, k + 1, r.coeffs[idx].1, &mut out);
            }
        }
    }
    out
}

/// 17 significant digits, enough for exact `f64` round-trips.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// A malformed SDPA file.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("sdpa parse error at line {line}: {msg}")]
pub struct SdpaParseError {
    /// 1-based line number.
    pub line: usize,
    /// What went wrong.
    pub msg: String,
}

/// Parses sparse SDPA text back into a problem, honoring the `*objconst`,
/// `*meta`, and `*eqpair` annotations written by [`export_sdpa`].
pub fn parse_sdpa(text: &str) -> Result<SDPProblem, SdpaParseError> {
    let err = |line: usize, msg: String| SdpaParseError { line, msg };
    let mut obj_constant = 0.0;
    let mut metadata_lines: Vec<String> = Vec::new();
    let mut eqpairs: Vec<(usize, usize, usize)> = Vec::new();

    let mut header: Vec<(usize, &str)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('*').or_else(|| trimmed.strip_prefix('"')) {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("objconst ") {
                obj_constant = v
                    .trim()
                    .parse()
                    .map_err(|_| err(line_no, format!("bad objconst value '{v}'")))?;
            } else if let Some(v) = rest.strip_prefix("meta ") {
                metadata_lines.push(v.to_string());
            } else if rest == "meta" {
                metadata_lines.push(String::new());
            } else if let Some(v) = rest.strip_prefix("eqpair ") {
                let nums: Vec<usize> = v
                    .split_whitespace()
                    .map(|t| t.parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| err(line_no, format!("bad eqpair '{v}'")))?;
                if nums.len() != 3 {
                    return Err(err(line_no, "eqpair needs block and two positions".into()));
                }
                eqpairs.push((nums[0], nums[1], nums[2]));
            }
            continue;
        }
        header.push((line_no, raw));
    }
    let mut lines = header.into_iter();
    let mut next_tokens = |what: &str| -> Result<(usize, Vec<String>), SdpaParseError> {
        let (ln, raw) = lines
            .next()
            .ok_or_else(|| err(0, format!("missing {what} line")))?;
        let cleaned: String = raw
            .chars()
            .map(|c| if matches!(c, '{' | '}' | '(' | ')' | ',') { ' ' } else { c })
            .collect();
        Ok((ln, cleaned.split_whitespace().map(str::to_string).collect()))
    };

    let (ln, toks) = next_tokens("variable count")?;
    if toks.is_empty() {
        return Err(err(ln, "missing variable count".into()));
    }
    let nvars: usize =
        toks[0].parse().map_err(|_| err(ln, format!("bad variable count '{}'", toks[0])))?;
    let (ln, toks) = next_tokens("block count")?;
    if toks.is_empty() {
        return Err(err(ln, "missing block count".into()));
    }
    let nblocks: usize =
        toks[0].parse().map_err(|_| err(ln, format!("bad block count '{}'", toks[0])))?;
    let (ln, toks) = if nblocks > 0 {
        next_tokens("block sizes")?
    } else {
        (0, Vec::new())
    };
    if toks.len() != nblocks {
        return Err(err(ln, format!("expected {nblocks} block sizes, found {}", toks.len())));
    }
    let mut sizes: Vec<i64> = Vec::with_capacity(nblocks);
    for t in &toks {
        sizes.push(t.parse().map_err(|_| err(ln, format!("bad block size '{t}'")))?);
    }
    let (ln, toks) = next_tokens("objective")?;
    if toks.len() != nvars {
        return Err(err(ln, format!("expected {nvars} objective values, found {}", toks.len())));
    }
    let mut objective = Vec::new();
    for (v, t) in toks.iter().enumerate() {
        let c: f64 = t.parse().map_err(|_| err(ln, format!("bad objective value '{t}'")))?;
        if c != 0.0 {
            objective.push((v, c));
        }
    }

    // Entry accumulation.
    struct DenseAcc {
        dim: usize,
        constant: BTreeMap<(u32, u32), f64>,
        coeffs: BTreeMap<usize, BTreeMap<(u32, u32), f64>>,
    }
    let mut dense: BTreeMap<usize, DenseAcc> = BTreeMap::new();
    let mut diag: BTreeMap<usize, (usize, Vec<f64>, Vec<BTreeMap<usize, f64>>)> = BTreeMap::new();
    for (bi, &sz) in sizes.iter().enumerate() {
        if sz >= 0 {
            let dim = sz as usize;
            dense.insert(
                bi + 1,
                DenseAcc { dim, constant: BTreeMap::new(), coeffs: BTreeMap::new() },
            );
        } else {
            let n = (-sz) as usize;
            diag.insert(bi + 1, (n, vec![0.0; n], vec![BTreeMap::new(); n]));
        }
    }

    for (ln, raw) in lines {
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(err(ln, format!("expected 5 fields, found {}", toks.len())));
        }
        let matno: usize =
            toks[0].parse().map_err(|_| err(ln, format!("bad matrix number '{}'", toks[0])))?;
        let blkno: usize =
            toks[1].parse().map_err(|_| err(ln, format!("bad block number '{}'", toks[1])))?;
        let i: usize = toks[2].parse().map_err(|_| err(ln, format!("bad row '{}'", toks[2])))?;
        let j: usize =
            toks[3].parse().map_err(|_| err(ln, format!("bad column '{}'", toks[3])))?;
        let v: f64 = toks[4].parse().map_err(|_| err(ln, format!("bad value '{}'", toks[4])))?;
        if matno > nvars {
            return Err(err(ln, format!("matrix number {matno} exceeds {nvars}")));
        }
        if i == 0 || j == 0 {
            return Err(err(ln, "entries are 1-based".into()));
        }
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        if let Some(acc) = dense.get_mut(&blkno) {
            if j > acc.dim {
                return Err(err(ln, format!("entry ({i},{j}) outside block of size {}", acc.dim)));
            }
            let key = ((i - 1) as u32, (j - 1) as u32);
            // F0 holds -C.
            if matno == 0 {
                *acc.constant.entry(key).or_insert(0.0) += -v;
            } else {
                *acc.coeffs.entry(matno - 1).or_default().entry(key).or_insert(0.0) += v;
            }
        } else if let Some((n, consts, coeffs)) = diag.get_mut(&blkno) {
            if i != j {
                return Err(err(ln, "off-diagonal entry in a diagonal block".into()));
            }
            if i > *n {
                return Err(err(ln, format!("entry {i} outside diagonal block of size {n}")));
            }
            if matno == 0 {
                consts[i - 1] += -v;
            } else {
                *coeffs[i - 1].entry(matno - 1).or_insert(0.0) += v;
            }
        } else {
            return Err(err(ln, format!("unknown block {blkno}")));
        }
    }

    let blocks: Vec<AffineBlock> = dense
        .into_values()
        .enumerate()
        .map(|(i, acc)| AffineBlock {
            dim: acc.dim,
            label: format!("block{}", i + 1),
            constant: acc.constant.into_iter().map(|((r, c), v)| (r, c, v)).collect(),
            coeffs: acc
                .coeffs
                .into_iter()
                .map(|(var, m)| (var, m.into_iter().map(|((r, c), v)| (r, c, v)).collect()))
                .collect(),
        })
        .collect();

    let mut eq_rows = Vec::new();
    let mut ineq_rows = Vec::new();
    for (blkno, (n, consts, coeffs)) in diag {
        let mut is_eq_member = vec![false; n];
        for &(b, p1, p2) in &eqpairs {
            if b == blkno {
                if p1 == 0 || p2 == 0 || p1 > n || p2 > n {
                    return Err(err(0, format!("eqpair positions ({p1},{p2}) out of range")));
                }
                is_eq_member[p1 - 1] = true;
                is_eq_member[p2 - 1] = true;
                eq_rows.push(LinearRow {
                    coeffs: coeffs[p1 - 1].iter().map(|(&v, &c)| (v, c)).collect(),
                    constant: consts[p1 - 1],
                    sense: RowSense::Equality,
                });
            }
        }
        for k in 0..n {
            if !is_eq_member[k] {
                ineq_rows.push(LinearRow {
                    coeffs: coeffs[k].iter().map(|(&v, &c)| (v, c)).collect(),
                    constant: consts[k],
                    sense: RowSense::GeqZero,
                });
            }
        }
    }

    Ok(SDPProblem {
        nvars,
        objective,
        obj_constant,
        blocks,
        eq_rows,
        ineq_rows,
        metadata: metadata_lines.join("\n"),
    })
}
