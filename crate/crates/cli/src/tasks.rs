use crate::config::{config_err, RunConfig};
use crate::Outcome;
use anyhow::{Context, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;
use surrogate_core::bench::{
    evaluate_grid, pareto_frontier, run_task1, task2_from_grids, task3_from_grids, tsv, GridSpec, Journal, Objective,
    SynthGrid, Task1Config, Task2Config,
};
use surrogate_core::dataset::Dataset;
use surrogate_core::dp_synth::MechanismRegistry;
use surrogate_core::metrics::{similarity_report, MetricGroup};

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("serializable") + "\n").collect()
}

fn write(out: &Path, name: &str, content: String) -> Result<()> {
    std::fs::write(out.join(name), content).with_context(|| format!("writing {name}"))
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<usize>) -> String {
    x.map_or_else(|| "-".into(), |v| v.to_string())
}

pub fn similarity(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let schema = cfg.load_schema()?;
    let private = cfg.load_private(&schema)?;
    let cands = cfg.load_candidates(&schema)?;
    let refs: Vec<(&str, &Dataset)> = cands.iter().map(|(n, d)| (n.as_str(), d)).collect();
    let table = similarity_report(&private, &refs)?;
    write(out, "similarity.tsv", table.render())?;
    Ok(Outcome::Done)
}

pub fn task1(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let schema = cfg.load_schema()?;
    let private = cfg.load_private(&schema)?;
    let cands = cfg.load_candidates(&schema)?;
    let mut t = Task1Config::new(&cfg.target, cfg.seed);
    t.n_seeds = cfg.seeds;
    t.epsilons = cfg.task1.epsilons.clone().unwrap_or_else(|| cfg.epsilons.clone());
    if let Some(g) = &cfg.task1.grid {
        t.grid = g.clone();
    }
    let res = run_task1(&private, &cands, &t).map_err(|e| config_err(e.to_string()))?;
    write(out, "task1_records.jsonl", jsonl(&res.records))?;
    write(out, "task1_failures.jsonl", jsonl(&res.failures))?;
    let rows: Vec<Vec<String>> = res
        .summaries
        .iter()
        .map(|s| {
            vec![
                s.candidate.clone(),
                f(s.epsilon),
                f(s.mean_advantage),
                f(s.best_pretrain_advantage),
                opt(s.best_pretrain_config),
                f(s.mean_auc),
                s.runs.to_string(),
            ]
        })
        .collect();
    write(
        out,
        "task1_summary.tsv",
        tsv(&["candidate", "epsilon", "mean_advantage", "best_pretrain_advantage", "best_pretrain_config", "mean_auc", "runs"], &rows),
    )?;
    if res.failures.is_empty() {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::Partial(format!("{} task 1 runs failed", res.failures.len())))
    }
}

pub struct SweepOverrides {
    pub mechanisms: Option<Vec<String>>,
    pub epsilons: Option<Vec<f64>>,
    pub seeds: Option<usize>,
}

struct Sweep {
    mechanism: String,
    private: SynthGrid,
    candidates: Vec<SynthGrid>,
}

/// Evaluate every mechanism on the private data and each candidate, reusing
/// runs already recorded in the run directory's journal.
fn sweep(cfg: &RunConfig, ov: &SweepOverrides, out: &Path) -> Result<Vec<Sweep>> {
    let schema = cfg.load_schema()?;
    let private = cfg.load_private(&schema)?;
    let cands = cfg.load_candidates(&schema)?;
    let registry = MechanismRegistry::with_defaults();
    let mechanisms = ov.mechanisms.clone().unwrap_or_else(|| cfg.mechanisms.clone());
    let epsilons = ov.epsilons.clone().unwrap_or_else(|| cfg.epsilons.clone());
    let spec = GridSpec::new(&cfg.target, epsilons, ov.seeds.unwrap_or(cfg.seeds), cfg.seed);
    let journal = Journal::open(&out.join("journal.jsonl"))?;
    if journal.completed() > 0 {
        eprintln!("resuming: {} runs already in the journal", journal.completed());
    }
    let mut sweeps = Vec::new();
    for name in &mechanisms {
        let mech = registry.get(name).map_err(|e| config_err(format!("{e}; known: {}", registry.names().join(", "))))?;
        let p = evaluate_grid("private", &private, mech, &spec, Some(&journal)).map_err(|e| config_err(e.to_string()))?;
        let cs = cands
            .iter()
            .map(|(n, d)| evaluate_grid(n, d, mech, &spec, Some(&journal)).map_err(|e| config_err(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        sweeps.push(Sweep { mechanism: name.clone(), private: p, candidates: cs });
    }
    for s in &sweeps {
        eprintln!("{}: {} runs", s.mechanism, s.private.records.len() * (1 + s.candidates.len()));
    }
    let mut records = Vec::new();
    for s in &sweeps {
        records.extend(s.private.records.iter().cloned());
        for c in &s.candidates {
            records.extend(c.records.iter().cloned());
        }
    }
    write(out, "records.jsonl", jsonl(&records))?;
    Ok(sweeps)
}

fn failed(sweeps: &[Sweep]) -> usize {
    sweeps.iter().map(|s| s.private.failures().count() + s.candidates.iter().map(|c| c.failures().count()).sum::<usize>()).sum()
}

fn partial(n: usize, missing: usize) -> Outcome {
    if n == 0 && missing == 0 {
        Outcome::Done
    } else {
        Outcome::Partial(format!("{n} runs failed, {missing} results missing"))
    }
}

pub fn task2(cfg: &RunConfig, ov: &SweepOverrides, out: &Path) -> Result<Outcome> {
    let sweeps = sweep(cfg, ov, out)?;
    let mut rows = Vec::new();
    let mut missing = 0;
    for s in &sweeps {
        let mut t = Task2Config::new(GridSpec::new(&cfg.target, s.private.epsilons.clone(), s.private.n_seeds, cfg.seed));
        t.relative = cfg.task2.relative.clone();
        t.aggregation = cfg.task2.aggregation;
        let res = task2_from_grids(&s.private, &s.candidates, &t).map_err(|e| config_err(e.to_string()))?;
        missing += res.missing.len();
        rows.extend(res.rows);
    }
    write(out, "degradation.jsonl", jsonl(&rows))?;
    let header = [
        "candidate", "mechanism", "epsilon", "metric", "degradation", "std_err", "mode", "chosen_config", "optimal_config", "chosen_value",
        "optimal_value", "seeds",
    ];
    for g in MetricGroup::ALL {
        let in_group = |o: &Objective| match o {
            Objective::Metric(m) => m.group() == g,
            Objective::Group(x) => *x == g,
        };
        let table: Vec<Vec<String>> = rows
            .iter()
            .filter(|r| in_group(&r.objective))
            .map(|r| {
                vec![
                    r.candidate.clone(),
                    r.mechanism.clone(),
                    f(r.epsilon),
                    r.objective.name().to_string(),
                    f(r.degradation),
                    f(r.std_err),
                    format!("{:?}", r.mode).to_lowercase(),
                    opt(r.chosen_config),
                    opt(r.optimal_config),
                    f(r.chosen_value),
                    f(r.optimal_value),
                    r.seeds.to_string(),
                ]
            })
            .collect();
        write(out, &format!("degradation_{}.tsv", g.name()), tsv(&header, &table))?;
    }
    // one row per candidate, mechanism and epsilon with the three group degradations
    let mut pivot: BTreeMap<(String, String, u64), [String; 3]> = BTreeMap::new();
    let mut order = Vec::new();
    for r in &rows {
        if let Objective::Group(g) = r.objective {
            let k = (r.candidate.clone(), r.mechanism.clone(), r.epsilon.to_bits());
            if !pivot.contains_key(&k) {
                order.push(k.clone());
            }
            let slot = MetricGroup::ALL.iter().position(|&x| x == g).unwrap();
            pivot.entry(k).or_insert_with(|| ["".into(), "".into(), "".into()])[slot] = f(r.degradation);
        }
    }
    let table: Vec<Vec<String>> = order
        .iter()
        .map(|k| {
            let v = &pivot[k];
            vec![k.0.clone(), k.1.clone(), f(f64::from_bits(k.2)), v[0].clone(), v[1].clone(), v[2].clone()]
        })
        .collect();
    write(out, "groups.tsv", tsv(&["candidate", "mechanism", "epsilon", "classification", "correlation", "marginals"], &table))?;
    Ok(partial(failed(&sweeps), missing))
}

pub fn task3(cfg: &RunConfig, ov: &SweepOverrides, out: &Path) -> Result<Outcome> {
    let sweeps = sweep(cfg, ov, out)?;
    let mut curves = Vec::new();
    let mut summaries = Vec::new();
    let mut rejected = 0;
    for s in &sweeps {
        let res = task3_from_grids(&s.private, &s.candidates, cfg.task2.aggregation).map_err(|e| config_err(e.to_string()))?;
        rejected += res.rejected.len();
        curves.extend(res.curves);
        summaries.extend(res.summaries);
    }
    write(out, "curves.jsonl", jsonl(&curves))?;
    let mut rows = Vec::new();
    for c in &curves {
        for (i, e) in c.curve.epsilons.iter().enumerate() {
            rows.push(vec![
                c.candidate.clone(),
                c.mechanism.clone(),
                c.group.name().to_string(),
                f(*e),
                f(c.curve.public[i]),
                f(c.curve.private[i]),
            ]);
        }
    }
    write(out, "curves.tsv", tsv(&["candidate", "mechanism", "group", "epsilon", "public", "private"], &rows))?;
    let rows: Vec<Vec<String>> =
        summaries.iter().map(|s| vec![s.candidate.clone(), s.mechanism.clone(), f(s.l1), f(s.l2)]).collect();
    write(out, "distances.tsv", tsv(&["candidate", "mechanism", "l1", "l2"], &rows))?;
    Ok(partial(failed(&sweeps), rejected))
}

/// Frontier of each group of rows in a tab-separated table, minimizing `objectives`.
pub fn pareto(input: &Path, key: &str, by: &[String], objectives: &[String], out: &Path) -> Result<Outcome> {
    let text = std::fs::read_to_string(input).map_err(|e| config_err(format!("{}: {e}", input.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| config_err("empty table"))?.split('\t').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or_else(|| config_err(format!("no column `{name}`")));
    let key_col = col(key)?;
    let by_cols: Vec<usize> = by.iter().map(|b| col(b)).collect::<Result<_>>()?;
    let obj_cols: Vec<usize> = objectives.iter().map(|o| col(o)).collect::<Result<_>>()?;
    if obj_cols.len() < 2 {
        return Err(config_err("need at least two objectives"));
    }
    let mut groups: Vec<(Vec<String>, Vec<(String, Vec<f64>)>)> = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        let cell = |c: usize| cells.get(c).copied().ok_or_else(|| config_err(format!("row {} is short", i + 2)));
        let gk: Vec<String> = by_cols.iter().map(|&c| cell(c).map(str::to_string)).collect::<Result<_>>()?;
        let vals: Vec<f64> = obj_cols
            .iter()
            .map(|&c| cell(c)?.parse::<f64>().map_err(|_| config_err(format!("row {}: not a number", i + 2))))
            .collect::<Result<_>>()?;
        let name = cell(key_col)?.to_string();
        match groups.iter_mut().find(|(k, _)| *k == gk) {
            Some((_, rows)) => rows.push((name, vals)),
            None => groups.push((gk, vec![(name, vals)])),
        }
    }
    let mut rows = Vec::new();
    for (gk, members) in &groups {
        let objs: Vec<Vec<f64>> = members.iter().map(|(_, v)| v.clone()).collect();
        let front: Vec<&str> = pareto_frontier(&objs).into_iter().map(|i| members[i].0.as_str()).collect();
        let mut row = gk.clone();
        row.push(front.join(", "));
        rows.push(row);
    }
    let mut hdr: Vec<&str> = by.iter().map(String::as_str).collect();
    hdr.push("pareto_efficient");
    write(out, "pareto.tsv", tsv(&hdr, &rows))?;
    Ok(Outcome::Done)
}
