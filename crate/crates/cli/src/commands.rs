use std::fs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbart::inference::{draw_predictions, inclusion_probabilities, quantile_sorted, select_variables};
use sbart::persist::{load_model, save_model};
use sbart::priors::GroupStructure;
use sbart::simulate::{friedman, rmse, selection_metrics, step_function};
use sbart::{FitConfig, FittedModel};
use serde_json::json;

use crate::error::CliError;
use crate::table::{read_groups, write_csv, write_text, Table};
use crate::{CvArgs, EvalArgs, FitArgs, Kind, ModelArgs, PredictArgs, SimulateArgs};

const SELECTION_THRESHOLD: f64 = 0.5;

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn build_config(args: &ModelArgs) -> Result<FitConfig, CliError> {
    let mut config = FitConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)?;
        config.apply_key_values(&text)?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(eta) = args.eta {
        config.eta = eta;
    }
    if let Some(t) = args.trees {
        config.num_trees = t;
    }
    if let Some(w) = args.warmup {
        config.warmup_iters = w;
    }
    if let Some(s) = args.samples {
        config.sample_iters = s;
    }
    config.validate()?;
    Ok(config)
}

struct Training {
    x: ndarray::Array2<f64>,
    y: Vec<f64>,
    names: Vec<String>,
    groups: Option<GroupStructure>,
}

fn load_training(args: &ModelArgs) -> Result<Training, CliError> {
    let table = Table::read(&args.data)?;
    let (x, y, names) = table.split_response(&args.response)?;
    let groups = match &args.groups {
        Some(path) => Some(GroupStructure::new(read_groups(path, &names)?)?),
        None => None,
    };
    Ok(Training { x, y, names, groups })
}

pub fn fit(args: FitArgs) -> Result<(), CliError> {
    if args.chains == 0 {
        return Err(CliError::usage("--chains must be at least 1"));
    }
    let config = build_config(&args.model)?;
    let data = load_training(&args.model)?;
    let mut model = FittedModel::fit(data.x.view(), &data.y, &config, data.groups, args.chains)?;
    model.feature_names = data.names;
    save_model(&model, &args.out)?;
    if let Some(path) = &args.export_json {
        let text = serde_json::to_string_pretty(&model).map_err(|e| CliError::data(e.to_string()))?;
        write_text(path, &text)?;
    }

    let trace = &model.trace;
    let sigma_mean =
        trace.draws.iter().map(|d| d.sigma).sum::<f64>() / trace.len().max(1) as f64 * model.transform.scale;
    let incl = inclusion_probabilities(trace);
    let mut order: Vec<usize> = (0..incl.len()).collect();
    order.sort_by(|&a, &b| incl[b].total_cmp(&incl[a]).then(a.cmp(&b)));
    order.truncate(10);
    let d = &trace.diagnostics;
    if args.json {
        let top: Vec<_> = order
            .iter()
            .map(|&j| json!({"column": model.feature_names[j], "inclusion": incl[j]}))
            .collect();
        let summary = json!({
            "n": data.y.len(),
            "p": model.num_predictors(),
            "num_trees": config.num_trees,
            "eta": config.eta,
            "seed": config.seed,
            "chains": args.chains,
            "draws": trace.len(),
            "tree_acceptance": d.tree_acceptance(),
            "bandwidth_acceptance": d.bandwidth_acceptance(),
            "sigma_mean": sigma_mean,
            "top_inclusion": top,
        });
        println!("{summary}");
    } else {
        println!("n = {}, p = {}, T = {}", data.y.len(), model.num_predictors(), config.num_trees);
        println!(
            "eta = {}, seed = {}, chains = {}, draws = {}",
            config.eta,
            config.seed,
            args.chains,
            trace.len()
        );
        println!(
            "acceptance: trees {:.3}, bandwidths {:.3}",
            d.tree_acceptance(),
            d.bandwidth_acceptance()
        );
        println!("posterior mean sigma = {sigma_mean:.5}");
        println!("top inclusion probabilities:");
        for &j in &order {
            println!("  {:<16} {:.3}", model.feature_names[j], incl[j]);
        }
    }
    Ok(())
}

pub fn predict(args: PredictArgs) -> Result<(), CliError> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::usage("--level must lie strictly between 0 and 1"));
    }
    let threads = args.threads.unwrap_or_else(default_threads).max(1);
    let model = load_model(&args.model)?;
    let table = Table::read(&args.data)?;
    let x_raw = table.select(&model.feature_names)?;
    let x = model.quantile_map.transform(x_raw.view())?;
    let draws = draw_predictions(&model.trace, x.view(), threads)?;
    let alpha = 1.0 - args.level;
    let rows = draws.columns().into_iter().enumerate().map(|(i, col)| {
        let mut v = col.to_vec();
        let mean = model.transform.to_original(v.iter().sum::<f64>() / v.len() as f64);
        v.sort_by(f64::total_cmp);
        let a = model.transform.to_original(quantile_sorted(&v, alpha / 2.0));
        let b = model.transform.to_original(quantile_sorted(&v, 1.0 - alpha / 2.0));
        vec![
            (i + 1).to_string(),
            mean.to_string(),
            a.min(b).to_string(),
            a.max(b).to_string(),
        ]
    });
    write_csv(&args.out, &["row", "mean", "lo", "hi"], rows)
}

pub fn cv(args: CvArgs) -> Result<(), CliError> {
    let config = build_config(&args.model)?;
    let data = load_training(&args.model)?;
    let result = sbart::inference::cross_validate_trees(
        data.x.view(),
        &data.y,
        &config,
        &args.t_grid,
        args.folds,
        data.groups.as_ref(),
    )?;
    let mut buf = Vec::new();
    result.write_csv(&mut buf)?;
    fs::write(&args.out, buf)?;
    let mut grid = args.t_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    for t in grid {
        log::info!("T = {t}: mean RMSE {:.5}", result.mean_rmse(t));
    }
    println!("{}", result.chosen);
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let sim = match args.kind {
        Kind::Friedman => friedman(args.n, args.p, args.sigma, args.lambda, &mut rng)?,
        Kind::Step => step_function(args.n, args.p, args.sigma, &mut rng)?,
    };
    let mut header: Vec<String> = (1..=args.p).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = sim.x.rows().into_iter().zip(&sim.y).map(|(row, y)| {
        let mut r: Vec<String> = row.iter().map(f64::to_string).collect();
        r.push(y.to_string());
        r
    });
    write_csv(&args.out, &header, rows)?;
    let truth = sim
        .f_true
        .iter()
        .enumerate()
        .map(|(i, f)| vec![(i + 1).to_string(), f.to_string()]);
    write_csv(&args.truth, &["row", "f_true"], truth)
}

fn resolve_vars(names: &[String], vars: &[String]) -> Result<Vec<usize>, CliError> {
    vars.iter()
        .map(|v| {
            let v = v.trim();
            if let Some(j) = names.iter().position(|n| n == v) {
                return Ok(j);
            }
            match v.parse::<usize>() {
                Ok(k) if (1..=names.len()).contains(&k) => Ok(k - 1),
                _ => Err(CliError::usage(format!("unknown predictor '{v}' in --truth-vars"))),
            }
        })
        .collect()
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    if args.predictions.is_none() && args.model.is_none() {
        return Err(CliError::usage("eval needs --predictions with --truth, or --model with --truth-vars"));
    }
    let mut out = serde_json::Map::new();
    if let (Some(pred), Some(truth)) = (&args.predictions, &args.truth) {
        let mean = Table::read(pred)?.column("mean")?;
        let f = Table::read(truth)?.column("f_true")?;
        if mean.len() != f.len() {
            return Err(CliError::data(format!(
                "predictions have {} rows but truth has {}",
                mean.len(),
                f.len()
            )));
        }
        out.insert("rmse".into(), json!(rmse(&mean, &f)?));
    }
    if let Some(path) = &args.model {
        let model = load_model(path)?;
        let truth = resolve_vars(&model.feature_names, &args.truth_vars)?;
        let selected = select_variables(&model.trace, SELECTION_THRESHOLD);
        let m = selection_metrics(&selected, &truth);
        let names: Vec<&str> = selected.iter().map(|&j| model.feature_names[j].as_str()).collect();
        out.insert("selected".into(), json!(names));
        out.insert("precision".into(), json!(m.precision));
        out.insert("recall".into(), json!(m.recall));
        out.insert("f1".into(), json!(m.f1));
    }
    if args.json {
        println!("{}", serde_json::Value::Object(out));
    } else {
        for (k, v) in &out {
            match v {
                serde_json::Value::Array(a) => {
                    let s: Vec<String> = a.iter().map(|x| x.as_str().unwrap_or_default().to_string()).collect();
                    println!("{k}: {}", s.join(","));
                }
                _ => println!("{k}: {v}"),
            }
        }
    }
    Ok(())
}
