//! One function per subcommand. Each returns the result in both formats.

use std::fs;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use treegibbs::{
    beta_threshold, check_double_sum, edge_marginal, fuzzy_chain, fuzzy_q, increment_laws, membership, norm_pair,
    one_norm_pair, periodic_solve, single_site_marginal, solve_fixed_point, wn_ggm_series, wn_localized_series,
    default_window, BoundaryLaw, Error, FuzzyChain, GoodSetQuery, LocalizedChain, NormOutcome, Pairing, Potential,
    Result, Sampler, SolveConfig, SolveMode, SolveReport,
};

use crate::output::{full, sig4, Emit, Metadata};
use crate::{ModelArgs, SimMode};

const MEMBERSHIP_TOL: f64 = 1e-15;

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Parses `--model`; `beta` is required for the built-in families.
pub fn potential(model: &ModelArgs) -> Result<Potential> {
    base_potential(&model.model, model.beta, false)
}

/// As [`potential`], but a missing β defaults to 1 (threshold searches only read the shape).
fn base_potential(model: &str, beta: Option<f64>, beta_optional: bool) -> Result<Potential> {
    let need = |b: Option<f64>| -> Result<f64> {
        match (b, beta_optional) {
            (Some(b), _) => Ok(b),
            (None, true) => Ok(1.0),
            (None, false) => Err(Error::Config(format!("--beta is required for model {model}"))),
        }
    };
    match model {
        "sos" => Potential::sos(need(beta)?),
        "log" => Potential::log(need(beta)?),
        m => match m.strip_prefix("custom:") {
            Some(path) => {
                let text =
                    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {path}: {e}")))?;
                let pot = Potential::from_json(&text)?;
                match beta {
                    Some(b) => pot.with_beta(b),
                    None => Ok(pot),
                }
            }
            None => Err(Error::Config(format!("unknown model {m:?}; expected sos, log or custom:<path>"))),
        },
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("--{name} must be positive (got {v})")))
    }
}

fn model_meta(meta: &mut Metadata, pot: &Potential) {
    meta.push("model", pot.name());
    meta.push("beta", full(pot.beta));
    if let treegibbs::PotentialKind::Custom(table) = &pot.kind {
        meta.push("custom_table", serde_json::to_string(table).unwrap_or_default());
    }
}

/// Flattens a JSON object into `key,value` rows.
fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, rows);
            }
        }
        Value::Array(a) => {
            for (i, v) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), v, rows);
            }
        }
        Value::Number(n) if n.is_f64() => rows.push((prefix.into(), n.as_f64().map(full).unwrap_or_default())),
        Value::Number(n) => rows.push((prefix.into(), n.to_string())),
        Value::String(s) => rows.push((prefix.into(), csv_field(s))),
        Value::Bool(b) => rows.push((prefix.into(), b.to_string())),
        Value::Null => rows.push((prefix.into(), String::new())),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn key_value_emit(meta: Metadata, body: Value) -> Emit {
    let mut rows = Vec::new();
    flatten("", &body, &mut rows);
    let mut csv = meta.csv_header();
    csv.push_str("key,value\n");
    for (k, v) in rows {
        csv.push_str(&format!("{k},{v}\n"));
    }
    Emit::new(&meta, body, csv)
}

fn norm_json(n: &NormOutcome) -> Value {
    to_value(n)
}

pub fn norms(model: &ModelArgs, d: u32, q: Option<usize>, tol: f64) -> Result<Emit> {
    positive("tol", tol)?;
    let pot = potential(model)?;
    let mut meta = Metadata::new("norms");
    model_meta(&mut meta, &pot);
    meta.push("d", d);
    meta.push("tol", full(tol));
    if let Some(q) = q {
        meta.push("q", q);
    }
    let (g, dl) = norm_pair(&pot, d, tol)?;
    let (one, one_off) = one_norm_pair(&pot, tol)?;
    let summable = one.is_finite();
    let double_sum = check_double_sum(&pot, d, tol)?;
    let mut notes = vec![
        "gamma and delta are the q = infinity pair: they govern localized Gibbs measures on Z".to_string(),
    ];
    let mut body = json!({
        "gamma": norm_json(&g),
        "delta": norm_json(&dl),
        "one_norm": norm_json(&one),
        "one_norm_without_zero": norm_json(&one_off),
        "summable": summable,
        "double_sum": to_value(&double_sum),
    });
    if !summable {
        notes.push("the one-norm of Q is infinite: no gradient Gibbs measure exists for any height period q".into());
    }
    if let Some(q) = q {
        if q == 0 {
            return Err(Error::Config("--q must be at least 1".into()));
        }
        if summable {
            let fq = fuzzy_q(&pot, q, tol)?.normalized();
            let (gq, dq) = fq.norm_pair(d);
            let verdict = if q >= 2 { Some(membership(&GoodSetQuery::new(d, gq, dq)?, MEMBERSHIP_TOL)) } else { None };
            body["fuzzy"] = json!({
                "q": q,
                "gamma": gq,
                "delta": dq,
                "values": fq.values,
                "membership": verdict.map(|v| to_value(&v)),
            });
        } else {
            body["fuzzy"] = json!({ "q": q, "status": "refused" });
        }
    }
    body["notes"] = to_value(&notes);
    Ok(key_value_emit(meta, body))
}

fn verdict_json(v: &treegibbs::MembershipVerdict) -> Value {
    json!({
        "in_good_set": v.in_good_set,
        "epsilon": v.epsilon,
        "L": v.lipschitz,
        "reason": to_value(&v.reason),
        "gamma_flag": v.gamma_flag,
    })
}

pub fn goodset(
    d: u32,
    gamma: Option<f64>,
    delta: Option<f64>,
    model: &ModelArgs,
    pairing: Pairing,
    tol: f64,
) -> Result<Emit> {
    positive("tol", tol)?;
    let mut meta = Metadata::new("goodset");
    meta.push("d", d);
    let (gamma, delta) = match (gamma, delta) {
        (Some(g), Some(dl)) => (g, dl),
        (None, None) => {
            let pot = potential(model)?;
            model_meta(&mut meta, &pot);
            meta.push("pairing", to_value(&pairing).as_str().unwrap_or_default());
            match treegibbs::goodset::pair_for(&pot, d, pairing, tol)? {
                Some(p) => p,
                None => {
                    let body = json!({
                        "in_good_set": false,
                        "epsilon": null,
                        "L": null,
                        "reason": "infinite_norm",
                        "gamma_flag": false,
                    });
                    return Ok(key_value_emit(meta, body));
                }
            }
        }
        _ => return Err(Error::Config("give both --gamma and --delta, or neither".into())),
    };
    meta.push("gamma", full(gamma));
    meta.push("delta", full(delta));
    let v = membership(&GoodSetQuery::new(d, gamma, delta)?, MEMBERSHIP_TOL);
    let mut body = verdict_json(&v);
    body["gamma"] = json!(gamma);
    body["delta"] = json!(delta);
    Ok(key_value_emit(meta, body))
}

pub fn threshold(model: &ModelArgs, d: u32, pairing: Pairing, tol: f64) -> Result<Emit> {
    positive("tol", tol)?;
    let base = base_potential(&model.model, model.beta, true)?;
    let mut meta = Metadata::new("threshold");
    meta.push("model", base.name());
    meta.push("d", d);
    meta.push("pairing", to_value(&pairing).as_str().unwrap_or_default());
    meta.push("tol", full(tol));
    let r = beta_threshold(&base, d, pairing, tol)?;
    let mut body = to_value(&r);
    body["beta_4sig"] = json!(sig4(r.beta));
    Ok(key_value_emit(meta, body))
}

fn solve_config(truncation: Option<usize>, tol: f64, max_iter: usize, best_effort: bool) -> SolveConfig {
    SolveConfig {
        radius: truncation,
        tol,
        max_iter,
        mode: if best_effort { SolveMode::BestEffort } else { SolveMode::Certified },
        ..SolveConfig::default()
    }
}

fn law_csv(meta: &Metadata, bl: &BoundaryLaw) -> Result<String> {
    let mut buf = Vec::new();
    bl.write_csv(&mut buf, &meta.pairs()).map_err(|e| Error::Config(e.to_string()))?;
    String::from_utf8(buf).map_err(|e| Error::Config(e.to_string()))
}

fn report_meta(meta: &mut Metadata, report: &SolveReport) {
    let mut rows = Vec::new();
    flatten("", &to_value(report), &mut rows);
    for (k, v) in rows {
        meta.push(&format!("report.{k}"), v);
    }
}

fn law_json(bl: &BoundaryLaw) -> Value {
    let marginal = single_site_marginal(bl);
    let rows: Vec<Value> = (0..bl.x.len())
        .map(|k| json!({ "index": bl.support.label(k), "x": bl.x[k], "lambda": bl.lambda[k], "marginal": marginal[k] }))
        .collect();
    json!({
        "support": to_value(&bl.support),
        "residual": bl.residual,
        "ball_radius": bl.ball_radius,
        "certificate": to_value(&bl.certificate),
        "values": rows,
    })
}

pub fn solve(
    model: &ModelArgs,
    d: u32,
    truncation: Option<usize>,
    tol: f64,
    max_iter: usize,
    best_effort: bool,
) -> Result<Emit> {
    positive("tol", tol)?;
    let pot = potential(model)?;
    let mut meta = Metadata::new("solve");
    model_meta(&mut meta, &pot);
    meta.push("d", d);
    meta.push("tol", full(tol));
    meta.push("max_iter", max_iter);
    meta.push("mode", if best_effort { "best_effort" } else { "certified" });
    if let Some(r) = truncation {
        meta.push("truncation", r);
    }
    let (bl, report) = solve_fixed_point(&pot, d, &solve_config(truncation, tol, max_iter, best_effort))?;
    let json_meta = meta.clone();
    report_meta(&mut meta, &report);
    let csv = law_csv(&meta, &bl)?;
    let body = json!({ "report": to_value(&report), "law": law_json(&bl) });
    Ok(Emit::new(&json_meta, body, csv))
}

fn chain_json(fc: &FuzzyChain) -> Value {
    json!({
        "p": fc.p,
        "alpha": fc.alpha,
        "stationarity_residual": fc.stationarity_residual(),
        "detailed_balance_residual": fc.detailed_balance_residual(),
    })
}

fn periodic_chain(pot: &Potential, d: u32, q: usize, tol: f64, best_effort: bool) -> Result<(BoundaryLaw, SolveReport, FuzzyChain)> {
    if q == 0 {
        return Err(Error::Config("--q must be at least 1".into()));
    }
    let (bl, report) = periodic_solve(pot, d, q, &solve_config(None, tol, 10_000, best_effort))?;
    let fq = fuzzy_q(pot, q, tol.min(1e-12))?;
    let fc = fuzzy_chain(&bl, &fq)?;
    Ok((bl, report, fc))
}

pub fn periodic(model: &ModelArgs, d: u32, q: usize, tol: f64, best_effort: bool) -> Result<Emit> {
    positive("tol", tol)?;
    let pot = potential(model)?;
    let mut meta = Metadata::new("periodic");
    model_meta(&mut meta, &pot);
    meta.push("d", d);
    meta.push("q", q);
    meta.push("tol", full(tol));
    meta.push("mode", if best_effort { "best_effort" } else { "certified" });
    let (bl, report, fc) = periodic_chain(&pot, d, q, tol, best_effort)?;
    let mut csv = meta.csv_header();
    csv.push_str("class,x,lambda,alpha\n");
    for k in 0..q {
        csv.push_str(&format!("{k},{},{},{}\n", full(bl.x[k]), full(bl.lambda[k]), full(fc.alpha[k])));
    }
    let body = json!({ "report": to_value(&report), "law": law_json(&bl), "fuzzy_chain": chain_json(&fc) });
    Ok(Emit::new(&meta, body, csv))
}

pub fn ggm(model: &ModelArgs, d: u32, q: usize, window: i64, tail_tol: f64) -> Result<Emit> {
    positive("tail-tol", tail_tol)?;
    if window < 0 {
        return Err(Error::Config("--window must be non-negative".into()));
    }
    let pot = potential(model)?;
    let mut meta = Metadata::new("ggm");
    model_meta(&mut meta, &pot);
    meta.push("d", d);
    meta.push("q", q);
    meta.push("window", window);
    meta.push("tail_tol", full(tail_tol));
    let (_, _, fc) = periodic_chain(&pot, d, q, 1e-12, false)?;
    let laws = increment_laws(&pot, q, tail_tol)?;
    let em = edge_marginal(&fc, &laws, window, tail_tol)?;
    meta.push("leaked", full(em.leaked));
    let mut csv = meta.csv_header();
    csv.push_str("j,prob\n");
    for j in -window..=window {
        csv.push_str(&format!("{j},{}\n", full(em.at(j))));
    }
    let tilt: f64 = (1..=window).map(|j| (em.at(j) - em.at(-j)).abs()).fold(0.0, f64::max);
    let body = json!({ "edge_marginal": to_value(&em), "max_tilt": tilt, "fuzzy_chain": chain_json(&fc) });
    Ok(Emit::new(&meta, body, csv))
}

pub struct SimulateOpts {
    pub d: u32,
    pub mode: SimMode,
    pub q: usize,
    pub n: Vec<usize>,
    pub window: Option<i64>,
    pub truncation: Option<usize>,
    pub tol: f64,
    pub seed: u64,
    pub sample_length: Option<usize>,
}

pub fn simulate(model: &ModelArgs, o: &SimulateOpts) -> Result<Emit> {
    positive("tol", o.tol)?;
    if o.n.is_empty() || o.n.contains(&0) {
        return Err(Error::Config("--n must list positive path lengths".into()));
    }
    let pot = potential(model)?;
    let mut meta = Metadata::new("simulate");
    model_meta(&mut meta, &pot);
    meta.push("d", o.d);
    let leak_tol = 1e-9;
    let (sampler, dists) = match o.mode {
        SimMode::Gibbs => {
            meta.push("mode", "gibbs");
            if let Some(r) = o.truncation {
                meta.push("truncation", r);
            }
            let (bl, _) = solve_fixed_point(&pot, o.d, &solve_config(o.truncation, o.tol, 10_000, false))?;
            let chain = LocalizedChain::new(&bl, &pot, 1e-13)?;
            let sampler = Sampler::gibbs(&chain)?;
            let dists = if o.sample_length.is_none() { Some(wn_localized_series(&chain, &o.n, leak_tol)?) } else { None };
            (sampler, dists)
        }
        SimMode::Ggm => {
            meta.push("mode", "ggm");
            meta.push("q", o.q);
            let (_, _, fc) = periodic_chain(&pot, o.d, o.q, o.tol, false)?;
            let laws = increment_laws(&pot, o.q, 1e-13)?;
            let sampler = Sampler::ggm(&fc, &laws)?;
            let dists = if o.sample_length.is_none() {
                let nmax = *o.n.iter().max().unwrap_or(&1);
                let window = match o.window {
                    Some(w) => w,
                    None => default_window(&pot, o.q, nmax)?,
                };
                meta.push("window", window);
                Some(wn_ggm_series(&fc, &laws, &o.n, window, leak_tol)?)
            } else {
                None
            };
            (sampler, dists)
        }
    };
    meta.push("tol", full(o.tol));
    let mut buf = Vec::new();
    let body = if let Some(len) = o.sample_length {
        meta.push("seed", o.seed);
        meta.push("sample_length", len);
        let path = sampler.sample_path(len, o.seed);
        path.write_csv(&mut buf, &meta.pairs()).map_err(|e| Error::Config(e.to_string()))?;
        json!({ "sample": to_value(&path), "total": path.total() })
    } else {
        let dists = dists.unwrap_or_default();
        meta.push("n", o.n.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "));
        treegibbs::pathsim::write_distributions_csv(&mut buf, &dists, &meta.pairs())
            .map_err(|e| Error::Config(e.to_string()))?;
        let rows: Vec<Value> = dists
            .iter()
            .map(|d| {
                let mut v = to_value(d);
                v["sup"] = json!(d.sup());
                v["distance_to_limit"] = json!(d.distance_to_limit());
                v
            })
            .collect();
        json!({ "distributions": rows })
    };
    let csv = String::from_utf8(buf).map_err(|e| Error::Config(e.to_string()))?;
    Ok(Emit::new(&meta, body, csv))
}

fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Config(format!("--beta-range must be a:b:step with a ≤ b and step > 0 (got {s:?})"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
    let (a, b, step) = (nums[0], nums[1], nums[2]);
    if !(a > 0.0 && b >= a && step > 0.0) || !b.is_finite() {
        return Err(bad());
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    if count > 1_000_000 {
        return Err(Error::Config(format!("--beta-range has {count} points, more than 10^6")));
    }
    Ok((0..count).map(|i| a + i as f64 * step).collect())
}

struct GridRow {
    d: u32,
    i: usize,
    beta: f64,
    gamma: Option<f64>,
    delta: Option<f64>,
    verdict: Option<treegibbs::MembershipVerdict>,
    flag: Option<String>,
}

pub fn phase_diagram(model: &str, beta_range: &str, d_list: &[u32], pairing: Pairing, tol: f64) -> Result<Emit> {
    positive("tol", tol)?;
    if d_list.is_empty() {
        return Err(Error::Config("--d-list must not be empty".into()));
    }
    let betas = parse_range(beta_range)?;
    let base = base_potential(model, None, true)?;
    let mut meta = Metadata::new("phase-diagram");
    meta.push("model", base.name());
    meta.push("beta_range", beta_range);
    meta.push("d_list", d_list.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "));
    meta.push("pairing", to_value(&pairing).as_str().unwrap_or_default());
    meta.push("tol", full(tol));

    let points: Vec<(u32, usize, f64)> =
        d_list.iter().flat_map(|&d| betas.iter().enumerate().map(move |(i, &b)| (d, i, b))).collect();
    let mut rows: Vec<GridRow> = points
        .par_iter()
        .map(|&(d, i, beta)| {
            let mut row = GridRow { d, i, beta, gamma: None, delta: None, verdict: None, flag: None };
            let pair = base.with_beta(beta).and_then(|p| treegibbs::goodset::pair_for(&p, d, pairing, 1e-12));
            match pair {
                Ok(Some((g, dl))) => {
                    row.gamma = Some(g);
                    row.delta = Some(dl);
                    match GoodSetQuery::new(d, g, dl) {
                        Ok(q) => row.verdict = Some(membership(&q, MEMBERSHIP_TOL)),
                        Err(e) => row.flag = Some(e.kind().to_string()),
                    }
                }
                Ok(None) => row.flag = Some("infinite_norm".into()),
                Err(e) => row.flag = Some(e.kind().to_string()),
            }
            row
        })
        .collect();
    rows.sort_by_key(|r| (r.d, r.i));

    let mut dsorted: Vec<u32> = d_list.to_vec();
    dsorted.sort_unstable();
    dsorted.dedup();
    let thresholds: Vec<(u32, std::result::Result<f64, String>)> = dsorted
        .par_iter()
        .map(|&d| (d, beta_threshold(&base, d, pairing, tol).map(|r| r.beta).map_err(|e| e.kind().to_string())))
        .collect();
    let thr = |d: u32| thresholds.iter().find(|t| t.0 == d).map(|t| t.1.clone());

    let opt = |v: Option<f64>| v.map(full).unwrap_or_default();
    let mut csv = meta.csv_header();
    csv.push_str("d,beta,gamma,delta,in_good_set,epsilon,L,beta_threshold,beta_threshold_4sig,flag\n");
    let mut json_rows = Vec::with_capacity(rows.len());
    for r in &rows {
        let t = thr(r.d);
        let (t_full, t_sig, t_flag) = match &t {
            Some(Ok(b)) => (full(*b), sig4(*b), None),
            Some(Err(k)) => (String::new(), String::new(), Some(format!("threshold:{k}"))),
            None => (String::new(), String::new(), None),
        };
        let flag = [r.flag.clone(), t_flag].into_iter().flatten().collect::<Vec<_>>().join(";");
        let v = r.verdict;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.d,
            full(r.beta),
            opt(r.gamma),
            opt(r.delta),
            v.map(|v| v.in_good_set).unwrap_or(false),
            opt(v.and_then(|v| v.epsilon)),
            opt(v.and_then(|v| v.lipschitz)),
            t_full,
            t_sig,
            flag
        ));
        json_rows.push(json!({
            "d": r.d,
            "beta": r.beta,
            "gamma": r.gamma,
            "delta": r.delta,
            "in_good_set": v.map(|v| v.in_good_set).unwrap_or(false),
            "epsilon": v.and_then(|v| v.epsilon),
            "L": v.and_then(|v| v.lipschitz),
            "beta_threshold": t.and_then(|t| t.ok()),
            "flag": if flag.is_empty() { Value::Null } else { Value::String(flag) },
        }));
    }
    Ok(Emit::new(&meta, json!({ "rows": json_rows }), csv))
}

pub fn table(model: &str, degrees: &[u32], pairing: Pairing, tol: f64) -> Result<Emit> {
    positive("tol", tol)?;
    if degrees.is_empty() {
        return Err(Error::Config("--d must not be empty".into()));
    }
    let base = base_potential(model, None, true)?;
    let mut meta = Metadata::new("table");
    meta.push("model", base.name());
    meta.push("d", degrees.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "));
    meta.push("pairing", to_value(&pairing).as_str().unwrap_or_default());
    meta.push("tol", full(tol));
    let reports: Vec<_> = degrees.par_iter().map(|&d| beta_threshold(&base, d, pairing, tol)).collect::<Result<_>>()?;
    let mut csv = meta.csv_header();
    csv.push_str("d,beta,beta_4sig,gamma,delta\n");
    let mut rows = Vec::new();
    for r in &reports {
        csv.push_str(&format!("{},{},{},{},{}\n", r.d, full(r.beta), sig4(r.beta), full(r.gamma), full(r.delta)));
        let mut v = to_value(r);
        v["beta_4sig"] = json!(sig4(r.beta));
        rows.push(v);
    }
    Ok(Emit::new(&meta, json!({ "rows": rows }), csv))
}
