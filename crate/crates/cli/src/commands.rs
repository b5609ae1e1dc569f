use std::io::Write as _;
use std::path::{Path, PathBuf};

use mbidx_core::datagen::{self, write_atomic};
use mbidx_core::eval::{resolve_t, Scenario};
use mbidx_core::report::{self, spearman};
use mbidx_core::{
    closed_set_run, generate, k_sweep, open_set_run, search_with, t_sweep, BinTable, Calibration,
    EnrolRecord, Error, EvalReport, Indexing, Layout, ProbeSet, ProtectedDataset, Result,
    SearchOptions, SubjectId,
};

use crate::config::{DataFormat, RunConfig};

macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

macro_rules! say_raw {
    ($($arg:tt)*) => {{
        let _ = write!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn index_path(c: &RunConfig) -> PathBuf {
    c.output.join("index.json")
}

fn calibration_path(c: &RunConfig) -> PathBuf {
    c.output.join("calibration.json")
}

pub fn synth(c: &RunConfig) -> Result<()> {
    let ds = generate(&c.synth_spec())?;
    ensure_dir(&c.output)?;
    let path = match c.synth.format {
        DataFormat::Csv => {
            let p = c.output.join("embeddings.csv");
            datagen::store_csv(&p, &ds)?;
            p
        }
        DataFormat::Bin => {
            let p = c.output.join("embeddings.bin");
            datagen::store_binary(&p, &ds)?;
            p
        }
    };
    say!(
        "{} records of {} identities ({}) -> {}",
        ds.records.len(),
        c.synth.identities,
        ds.characteristic_names().join(", "),
        path.display()
    );
    Ok(())
}

fn protected_data(c: &RunConfig) -> Result<ProtectedDataset> {
    let wanted = c.scheme_config();
    if let Some(path) = &c.protected {
        let pd = ProtectedDataset::load(path)?;
        if pd.scheme != wanted {
            return Err(Error::Config(format!(
                "{} was protected with {:?}, the configuration asks for {:?}",
                path.display(),
                pd.scheme,
                wanted
            )));
        }
        return Ok(pd);
    }
    let Some(path) = &c.dataset else {
        return Err(Error::Config(
            "no input: set `dataset` or `protected` (or pass --dataset / --protected)".into(),
        ));
    };
    ProtectedDataset::protect(&datagen::load(path)?, &wanted)
}

fn characteristics(c: &RunConfig, pd: &ProtectedDataset) -> Result<Vec<String>> {
    let order = c
        .index
        .characteristics
        .clone()
        .unwrap_or_else(|| pd.characteristics.clone());
    for name in &order {
        if !pd.characteristics.contains(name) {
            return Err(Error::Config(format!(
                "characteristic {name:?} is not in the data ({})",
                pd.characteristics.join(", ")
            )));
        }
    }
    Ok(order)
}

pub fn protect(c: &RunConfig) -> Result<()> {
    if c.dataset.is_none() {
        return Err(Error::Config("protect needs `dataset`".into()));
    }
    let pd = protected_data(&RunConfig {
        protected: None,
        ..c.clone()
    })?;
    ensure_dir(&c.output)?;
    let path = c.output.join("protected.json");
    pd.store(&path)?;
    say!(
        "{} subjects protected with {} -> {}",
        pd.len(),
        pd.scheme.scheme,
        path.display()
    );
    Ok(())
}

pub fn index(c: &RunConfig) -> Result<()> {
    let pd = protected_data(c)?;
    let order = characteristics(c, &pd)?;
    let enrol = c.search.enrol_sample;
    let records = pd
        .subject_ids()
        .into_iter()
        .map(|id| {
            Ok(EnrolRecord {
                subject_id: id,
                templates: pd.sample_set(id, &order, enrol)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let layout = Layout::new(c.index.strategy, c.index.k, order.clone())
        .map_err(|e| Error::Config(e.to_string()))?;
    let table = BinTable::build(records, layout, pd.scheme.clone())?;

    let calib_ids: Vec<SubjectId> = pd
        .subject_ids()
        .into_iter()
        .take(c.protocol.calibration_identities.max(2))
        .collect();
    let refs = calib_ids
        .iter()
        .map(|&id| pd.sample_set(id, &order, enrol))
        .collect::<Result<Vec<_>>>()?;
    let probes = calib_ids
        .iter()
        .map(|&id| pd.sample_set(id, &order, c.search.probe_sample))
        .collect::<Result<Vec<_>>>()?;
    let calibration = Calibration::from_pairs(
        &refs.iter().collect::<Vec<_>>(),
        &probes.iter().collect::<Vec<_>>(),
        pd.scheme.scheme,
    )?;

    ensure_dir(&c.output)?;
    write_atomic(&index_path(c), table.to_json()?.as_bytes())?;
    write_atomic(
        &calibration_path(c),
        serde_json::to_string_pretty(&calibration)?.as_bytes(),
    )?;
    let occ = table.occupancy_stats();
    say!(
        "{} subjects, {} / {} bins used, occupancy mean {:.3} std {:.3} max {} -> {}",
        table.len(),
        occ.sizes.len(),
        1u64 << table.k(),
        occ.mean,
        occ.std,
        occ.sizes.iter().max().copied().unwrap_or(0),
        index_path(c).display()
    );
    Ok(())
}

pub fn search(c: &RunConfig, subject: u64, top: Option<usize>, json: bool) -> Result<()> {
    let table = BinTable::load(&index_path(c))?;
    let calib_path = calibration_path(c);
    let text = std::fs::read_to_string(&calib_path).map_err(|e| Error::Io {
        path: calib_path.clone(),
        source: e,
    })?;
    let calibration: Calibration = serde_json::from_str(&text)?;
    let pd = protected_data(c)?;
    if pd.scheme != table.scheme {
        return Err(Error::Config(
            "probe data and index use different scheme configurations".into(),
        ));
    }
    let order = table.layout.characteristic_order.clone();
    let z = ProbeSet::new(pd.sample_set(SubjectId(subject), &order, c.search.probe_sample)?);
    let t = c.search.t.unwrap_or(1usize << table.k());
    let opts = SearchOptions {
        empty_bins_consume_visit: c.protocol.empty_bins_consume_visit,
    };
    let mut list = search_with(&z, &table, t, &calibration, opts)?;
    list.candidates.truncate(top.unwrap_or(c.search.top));
    if json {
        say!("{}", serde_json::to_string_pretty(&list)?);
        return Ok(());
    }
    let baseline = table.len() * table.m();
    say!(
        "probe {subject}: {} bins visited, {} comparisons ({:.2}% of {baseline})",
        list.bins_visited,
        list.comparisons_performed,
        100.0 * list.comparisons_performed as f64 / baseline as f64
    );
    for (rank, cand) in list.candidates.iter().enumerate() {
        let mark = if cand.subject_id.0 == subject {
            "  <- mate"
        } else {
            ""
        };
        say!(
            "{:>4}  {:>8}  {:>10.4}{mark}",
            rank + 1,
            cand.subject_id,
            cand.score
        );
    }
    Ok(())
}

fn indexings(c: &RunConfig) -> Vec<Indexing> {
    let mut out = Vec::new();
    if c.bench.exhaustive {
        out.push(Indexing::Exhaustive);
    }
    out.extend(c.bench.strategies.iter().map(|&strategy| Indexing::Binned {
        strategy,
        k: c.index.k,
    }));
    out
}

pub fn bench(c: &RunConfig) -> Result<()> {
    let pd = protected_data(c)?;
    let order = characteristics(c, &pd)?;
    let protocol = c.protocol();
    let mut groups = vec![order.clone()];
    if c.bench.singles && order.len() > 1 {
        groups.extend(order.iter().map(|name| vec![name.clone()]));
    }
    let mut reports: Vec<EvalReport> = Vec::new();
    for scenario in &c.bench.scenarios {
        for group in &groups {
            for ix in indexings(c) {
                let r = match scenario {
                    Scenario::ClosedSet => closed_set_run(&pd, group, ix, &protocol)?,
                    Scenario::OpenSet => {
                        // the derived t is fixed before the run so it is reported once
                        let t = resolve_t(&pd, group, ix, protocol.t_policy, &protocol)?;
                        let policy = match t {
                            Some(t) => mbidx_core::TPolicy::Fixed { t },
                            None => protocol.t_policy,
                        };
                        open_set_run(&pd, group, ix, policy, &protocol)?
                    }
                };
                reports.push(r);
            }
        }
    }
    report::write_reports(&c.output, "bench", &reports)?;
    say_raw!("{}", report::render_table(&reports));
    say!("reports -> {}", c.output.join("bench.{csv,json}").display());
    Ok(())
}

pub fn sweep(c: &RunConfig, with_t: bool) -> Result<()> {
    let pd = protected_data(c)?;
    let order = characteristics(c, &pd)?;
    let protocol = c.protocol();
    let mut reports = Vec::new();
    for &strategy in &c.bench.strategies {
        let sweep = k_sweep(&pd, &order, strategy, &protocol.k_range, &protocol)?;
        if sweep.len() > 1 {
            let ks: Vec<f64> = protocol.k_range.iter().map(|&k| k as f64).collect();
            let w: Vec<f64> = sweep.iter().map(|r| r.aggregate.w_u).collect();
            match spearman(&ks, &w) {
                Ok(rho) => say!("{strategy}: Spearman(k, W_u) = {rho:.3}"),
                Err(_) => say!("{strategy}: Spearman(k, W_u) undefined"),
            }
        }
        reports.extend(sweep);
    }
    report::write_reports(&c.output, "sweep", &reports)?;
    write_atomic(&c.output.join("w_vs_k.csv"), &w_vs_k_csv(&reports)?)?;
    if with_t {
        let points = t_sweep(&pd, &order, c.index.strategy, c.index.k, &protocol)?;
        write_atomic(
            &c.output.join("t_sweep.csv"),
            &report::t_sweep_csv(&points)?,
        )?;
    }
    say_raw!("{}", report::render_table(&reports));
    Ok(())
}

fn w_vs_k_csv(reports: &[EvalReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let enc = |e: csv::Error| Error::State(format!("csv encoding failed: {e}"));
    w.write_record([
        "characteristics",
        "scheme",
        "strategy",
        "k",
        "w_u",
        "w_l",
        "hit_rate",
        "mean_bins_visited",
    ])
    .map_err(enc)?;
    for r in reports {
        let a = &r.aggregate;
        w.write_record([
            r.label(),
            r.scheme.to_string(),
            r.indexing.label(),
            r.indexing.k().map(|k| k.to_string()).unwrap_or_default(),
            a.w_u.to_string(),
            a.w_l.to_string(),
            a.hit_rate.to_string(),
            a.mean_bins_visited.to_string(),
        ])
        .map_err(enc)?;
    }
    w.into_inner()
        .map_err(|e| Error::State(format!("csv encoding failed: {e}")))
}
