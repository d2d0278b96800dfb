use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use faultlens::campaign::{derive_dbf, run_sbf_campaign, sbf_rates, write_campaign_file, RateLabel};
use faultlens::designgen::{generate_dataset, DatasetManifest, Labels, ManifestRow};
use faultlens::gnn::{load_checkpoint, save_checkpoint, train_kfold, FoldReport, GcnModel, TrainConfig, TrainSample};
use faultlens::graph::{build_vocab, encode_features, extract_graph, CircuitGraph, GraphFile};
use faultlens::netlist::{parse_edif, partition_modules, Netlist, PrefixRule};
use faultlens::sim::{compile, Stimulus};
use rayon::prelude::*;
use serde::Serialize;

use crate::timing::{CampaignTiming, PredictTiming, TimingReport, Timings};
use crate::{io_err, CliError, GlobalArgs};

/// Cycle budget of every simulation; a gold run that is not done by then is
/// reported as `GoldNeverDone`.
pub const MAX_CYCLES: usize = 256;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes `text` unless the file already holds exactly that.
fn write_if_changed(path: &Path, text: &str) -> Result<(), CliError> {
    if fs::read_to_string(path).ok().as_deref() == Some(text) {
        return Ok(());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}

pub fn load_manifest(g: &GlobalArgs) -> Result<DatasetManifest, CliError> {
    Ok(DatasetManifest::load(&g.manifest_path())?)
}

fn save_manifest(g: &GlobalArgs, m: &DatasetManifest) -> Result<(), CliError> {
    let path = g.manifest_path();
    if fs::read_to_string(&path).ok().as_deref() == Some(m.to_json().as_str()) {
        return Ok(());
    }
    Ok(m.save(&path)?)
}

fn timings_path(g: &GlobalArgs) -> PathBuf {
    g.workspace.join("timings.json")
}

pub fn load_timings(g: &GlobalArgs) -> Result<Timings, CliError> {
    let path = timings_path(g);
    match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Timings::default()),
        Err(e) => Err(io_err(&path)(e)),
    }
}

fn update_timings(g: &GlobalArgs, f: impl FnOnce(&mut Timings)) -> Result<(), CliError> {
    let mut t = load_timings(g)?;
    f(&mut t);
    let path = timings_path(g);
    fs::write(&path, to_json(&t)).map_err(io_err(&path))
}

pub fn load_netlist(path: &Path) -> Result<Netlist, CliError> {
    Ok(parse_edif(&read(path)?)?)
}

pub fn design_graph(workspace: &Path, row: &ManifestRow) -> Result<CircuitGraph, CliError> {
    Ok(extract_graph(&load_netlist(&workspace.join(&row.edif_path))?))
}

/// Writes the designs, their graph files, the feature vocabulary and the
/// manifest. Labels already present in an existing manifest are kept.
pub fn generate(g: &GlobalArgs, count: usize, seed_circuit: &str, seed: u64) -> Result<DatasetManifest, CliError> {
    let ws = &g.workspace;
    fs::create_dir_all(ws).map_err(io_err(ws))?;
    let mut manifest = generate_dataset(ws, count, seed_circuit, seed)?;
    if let Ok(old) = load_manifest(g) {
        for row in &mut manifest.rows {
            if let Some(prev) = old.rows.iter().find(|r| r.design_id == row.design_id && r.edif_path == row.edif_path) {
                row.labels = prev.labels.clone();
                row.excluded = prev.excluded.clone();
            }
        }
    }
    let graphs: Vec<CircuitGraph> = manifest
        .rows
        .iter()
        .map(|row| design_graph(ws, row))
        .collect::<Result<_, _>>()?;
    let vocab = build_vocab(&graphs);
    write_if_changed(&ws.join("vocab.json"), &to_json(&vocab))?;
    for (row, graph) in manifest.rows.iter().zip(&graphs) {
        let fm = encode_features(graph, &vocab).expect("vocabulary covers its own graphs");
        let mut text = GraphFile::new(&row.design_id, graph, &fm).to_json();
        text.push('\n');
        write_if_changed(&ws.join(&row.graph_path), &text)?;
    }
    save_manifest(g, &manifest)?;
    log::info!("generated {} {} designs in {}", count, seed_circuit, ws.display());
    Ok(manifest)
}

/// Ground truth of one design.
pub struct DesignLabels {
    pub labels: Labels,
    pub records: String,
    pub sbf_time: Duration,
    pub dbf_time: Duration,
}

pub fn label_design(netlist: &Netlist, stimulus: u64) -> Result<DesignLabels, CliError> {
    let prog = compile(netlist)?;
    let map = partition_modules(netlist, &PrefixRule::dmr_defaults())
        .map_err(|e| CliError::Invalid(format!("{e:?}")))?;
    let stim = Stimulus::from_word(&prog, stimulus, MAX_CYCLES);
    let t0 = Instant::now();
    let c = run_sbf_campaign(&prog, &stim, &map).map_err(campaign_err)?;
    let sbf = sbf_rates(&c.records).map_err(campaign_err)?;
    let sbf_time = t0.elapsed();
    let t1 = Instant::now();
    let dbf = derive_dbf(&c, &map).map_err(campaign_err)?;
    let dbf_time = t1.elapsed();
    Ok(DesignLabels {
        records: write_campaign_file(netlist, &c, &sbf, &dbf),
        labels: Labels {
            done_time: c.done_time(),
            dff_count: netlist.dffs().len(),
            sbf,
            dbf,
        },
        sbf_time,
        dbf_time,
    })
}

fn campaign_err(e: faultlens::campaign::CampaignError) -> CliError {
    match e {
        faultlens::campaign::CampaignError::Sim(s) => CliError::Sim(s),
        other => CliError::Invalid(other.to_string()),
    }
}

/// Labels every design of the manifest. Designs whose campaign fails are
/// marked `excluded` with the reason and skipped by training.
pub fn campaign(g: &GlobalArgs, jobs: usize, force: bool) -> Result<DatasetManifest, CliError> {
    let mut manifest = load_manifest(g)?;
    let ws = &g.workspace;
    let dir = ws.join("campaigns");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let todo: Vec<usize> = (0..manifest.rows.len())
        .filter(|&i| force || (manifest.rows[i].labels.is_none() && manifest.rows[i].excluded.is_none()))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let rows = &manifest.rows;
    let results: Vec<(usize, Result<DesignLabels, CliError>)> = pool.install(|| {
        todo.par_iter()
            .map(|&i| {
                let row = &rows[i];
                let r = load_netlist(&ws.join(&row.edif_path)).and_then(|n| label_design(&n, row.stimulus));
                (i, r)
            })
            .collect()
    });
    let mut timing = CampaignTiming::default();
    let mut failed = 0;
    for (i, r) in results {
        let row = &mut manifest.rows[i];
        match r {
            Ok(d) => {
                write_if_changed(&dir.join(format!("{}.csv", row.design_id)), &d.records)?;
                timing.designs += 1;
                timing.sbf_seconds += d.sbf_time.as_secs_f64();
                timing.dbf_seconds += d.dbf_time.as_secs_f64();
                row.labels = Some(d.labels);
                row.excluded = None;
            }
            Err(e) => {
                log::warn!("{} excluded: {e}", row.design_id);
                failed += 1;
                row.labels = None;
                row.excluded = Some(format!("{}: {e}", e.kind()));
            }
        }
    }
    save_manifest(g, &manifest)?;
    if timing.designs > 0 {
        update_timings(g, |t| {
            let c = t.campaign.get_or_insert_with(CampaignTiming::default);
            if force {
                *c = CampaignTiming::default();
            }
            c.designs += timing.designs;
            c.sbf_seconds += timing.sbf_seconds;
            c.dbf_seconds += timing.dbf_seconds;
        })?;
    }
    log::info!("labelled {} designs, {} excluded", timing.designs, failed);
    Ok(manifest)
}

/// Labelled, non-excluded designs with their DBF rate for `label`.
pub fn training_samples(g: &GlobalArgs, manifest: &DatasetManifest, label: RateLabel) -> Result<Vec<TrainSample>, CliError> {
    manifest
        .rows
        .iter()
        .filter(|r| r.excluded.is_none())
        .filter_map(|r| r.labels.as_ref().map(|l| (r, l)))
        .map(|(r, l)| {
            Ok(TrainSample {
                id: r.design_id.clone(),
                graph: design_graph(&g.workspace, r)?,
                rate: l.dbf.rate(label),
            })
        })
        .collect()
}

pub fn model_path(ws: &Path, label: RateLabel) -> PathBuf {
    ws.join("models").join(format!("{}.json", label.as_str()))
}

/// Trains one model per label; writes the checkpoints, per-label fold
/// reports and an R² table under `reports/`.
pub fn train(g: &GlobalArgs, labels: &[RateLabel], cfg: &TrainConfig) -> Result<Vec<FoldReport>, CliError> {
    let manifest = load_manifest(g)?;
    let ws = &g.workspace;
    let reports_dir = ws.join("reports");
    for d in [ws.join("models"), reports_dir.clone()] {
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let mut reports = Vec::new();
    for &label in labels {
        let samples = training_samples(g, &manifest, label)?;
        let t0 = Instant::now();
        let (model, report) = train_kfold(&samples, label, cfg)?;
        let secs = t0.elapsed().as_secs_f64();
        let path = model_path(ws, label);
        fs::write(&path, save_checkpoint(&model)).map_err(io_err(&path))?;
        let rpath = reports_dir.join(format!("{}_folds.json", label.as_str()));
        fs::write(&rpath, to_json(&report)).map_err(io_err(&rpath))?;
        update_timings(g, |t| {
            t.train.insert(label.as_str().to_string(), secs);
        })?;
        log::info!("{label}: trained in {secs:.1} s, selected fold {}", report.selected);
        reports.push(report);
    }
    let table = r2_table(&reports);
    let tpath = reports_dir.join("r2_table.md");
    fs::write(&tpath, &table).map_err(io_err(&tpath))?;
    Ok(reports)
}

pub fn r2_table(reports: &[FoldReport]) -> String {
    let mut s = String::from("| label | hidden | fold | best epoch | epochs | val MSE | test R² |\n|---|---:|---:|---:|---:|---:|---:|\n");
    for r in reports {
        for f in &r.folds {
            let mark = if f.fold == r.selected { "*" } else { "" };
            let r2 = f.test_r2.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            s.push_str(&format!(
                "| {} | {} | {}{} | {} | {} | {:.4e} | {} |\n",
                r.target_label, r.hidden_dim, f.fold, mark, f.best_epoch, f.epochs_run, f.best_val_mse, r2
            ));
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub design: String,
    pub label: RateLabel,
    pub rate: f64,
    pub seconds: f64,
}

fn edif_inputs(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io_err(path))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "edif"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn predict_with(model: &GcnModel, path: &Path) -> Result<Prediction, CliError> {
    let t0 = Instant::now();
    let graph = extract_graph(&load_netlist(path)?);
    let rate = model.predict(&graph)?;
    Ok(Prediction {
        design: path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
        label: model.target_label,
        rate,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Predicts every design under `path`, prints one CSV row per design and
/// appends the rows to `<workspace>/predictions.csv`.
pub fn predict(
    g: &GlobalArgs,
    path: &Path,
    checkpoint: Option<&Path>,
    label: RateLabel,
) -> Result<Vec<Prediction>, CliError> {
    let ckpt = checkpoint.map_or_else(|| model_path(&g.workspace, label), Path::to_path_buf);
    let model = load_checkpoint(&read(&ckpt)?)?;
    let inputs = edif_inputs(path)?;
    if inputs.is_empty() {
        return Err(CliError::Invalid(format!("no .edif files under {}", path.display())));
    }
    let preds: Vec<Prediction> = inputs.iter().map(|p| predict_with(&model, p)).collect::<Result<_, _>>()?;
    fs::create_dir_all(&g.workspace).map_err(io_err(&g.workspace))?;
    let out_path = g.workspace.join("predictions.csv");
    let fresh = !out_path.exists();
    let mut out = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&out_path)
        .map_err(io_err(&out_path))?;
    let mut text = String::new();
    if fresh {
        text.push_str("design,label,rate,seconds\n");
    }
    for p in &preds {
        let line = format!("{},{},{:e},{:e}\n", p.design, p.label, p.rate, p.seconds);
        print!("{line}");
        text.push_str(&line);
    }
    out.write_all(text.as_bytes()).map_err(io_err(&out_path))?;
    update_timings(g, |t| {
        let pt = t.predict.get_or_insert_with(PredictTiming::default);
        pt.calls += preds.len();
        pt.seconds += preds.iter().map(|p| p.seconds).sum::<f64>();
    })?;
    Ok(preds)
}

/// Builds the timing report from recorded campaign, training and prediction
/// costs and writes it to `reports/timing.{json,md}`.
pub fn report(g: &GlobalArgs) -> Result<TimingReport, CliError> {
    let t = load_timings(g)?;
    let campaign = t
        .campaign
        .as_ref()
        .ok_or_else(|| CliError::MissingTimings("no campaign has been run".into()))?;
    if t.train.is_empty() {
        return Err(CliError::MissingTimings("no model has been trained".into()));
    }
    let predict = match &t.predict {
        Some(p) if p.calls > 0 => p.seconds / p.calls as f64,
        _ => return Err(CliError::MissingTimings("no prediction has been timed".into())),
    };
    let r = TimingReport::build(campaign, &t.train, predict);
    let dir = g.workspace.join("reports");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let md = r.to_markdown();
    for (name, text) in [("timing.json", to_json(&r)), ("timing.md", md.clone())] {
        let p = dir.join(name);
        fs::write(&p, text).map_err(io_err(&p))?;
    }
    print!("{md}");
    Ok(r)
}

pub fn trace(path: &Path, stimulus: u64, cycles: usize) -> Result<(), CliError> {
    let netlist = load_netlist(path)?;
    let prog = compile(&netlist)?;
    let stim = Stimulus::from_word(&prog, stimulus, MAX_CYCLES);
    print!("{}", prog.trace(&stim, cycles)?);
    Ok(())
}
