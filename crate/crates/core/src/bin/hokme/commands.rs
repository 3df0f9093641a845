use std::fs;
use std::path::{Path as FsPath, PathBuf};

use hokme::causal::{kpc_skeleton, KpcConfig};
use hokme::condind::{ci_test, AlphaMode, CiConfig};
use hokme::datagen::{
    chain_adjacency, gen_brownian, gen_fbm, gen_fig3, gen_fig3_mixture, gen_spring_system, uniform_grid, Fig3,
    SpringConfig,
};
use hokme::dataset::{load, to_jsonl, write_csv_dir};
use hokme::dr::{cross_mmd_matrix, cv_grid_search_from_mmd, fingerprint, fit_krr_from_mmd, pairwise_mmd, predict_from_mmd, DrModel};
use hokme::higherorder::{higher_order_gram, higher_order_mmd, HigherOrderConfig, Variant};
use hokme::json::{fmt_f64, to_string_pretty, write_atomic};
use hokme::mmdtest::two_sample_test_with;
use hokme::sigkernel::{first_order_gram, first_order_gram_terminal, GramField, PdeSolver};
use hokme::{Ensemble, Error, Result};

use crate::opts::Opts;

fn out_path(o: &Opts) -> Result<PathBuf> {
    Opts::need(&o.out, "out")
}

fn format(o: &Opts, allowed: &[&str]) -> Result<String> {
    let f = o.format.clone().unwrap_or_else(|| allowed[0].to_string());
    if !allowed.contains(&f.as_str()) {
        return Err(Error::InvalidArgument(format!("format must be one of {allowed:?}, got {f:?}")));
    }
    Ok(f)
}

fn hoc(o: &Opts) -> Result<HigherOrderConfig> {
    let d = HigherOrderConfig::default();
    let cfg = HigherOrderConfig {
        order: o.order.unwrap_or(d.order),
        lambda: o.lambda.unwrap_or(d.lambda),
        refinement: o.refinement.unwrap_or(d.refinement),
        scheme: match &o.scheme {
            Some(s) => s.parse()?,
            None => d.scheme,
        },
        time_augment: o.time_augment,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn variant(o: &Opts, default: Variant) -> Result<Variant> {
    o.variant.as_deref().map_or(Ok(default), str::parse)
}

fn load_many(paths: &[PathBuf]) -> Result<Vec<Ensemble>> {
    paths.iter().map(load).collect()
}

fn write_json<T: serde::Serialize>(path: &FsPath, value: &T) -> Result<()> {
    let mut s = to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// Builds the directory next to its destination and swaps it in.
fn write_dir_atomic(dest: &FsPath, fill: impl FnOnce(&FsPath) -> Result<()>) -> Result<()> {
    let parent = match dest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let tmp = tempfile::Builder::new().prefix(".hokme-").tempdir_in(&parent)?;
    fill(tmp.path())?;
    if dest.is_dir() {
        fs::remove_dir_all(dest)?;
    } else if dest.exists() {
        fs::remove_file(dest)?;
    }
    fs::rename(tmp.keep(), dest)?;
    Ok(())
}

fn write_ensemble(e: &Ensemble, dest: &FsPath, fmt: &str) -> Result<()> {
    match fmt {
        "json" => write_atomic(dest, to_jsonl(e).as_bytes()),
        _ => write_dir_atomic(dest, |d| write_csv_dir(e, d)),
    }
}

pub fn gen(o: &Opts) -> Result<()> {
    let out = out_path(o)?;
    let fmt = format(o, &["json", "csv"])?;
    let kind = Opts::need(&o.kind, "kind")?;
    let m = Opts::need(&o.m, "m")?;
    let seed = o.seed.unwrap_or(0);
    let grid = || -> Result<Vec<f64>> {
        let n = o.grid_points.unwrap_or(11);
        if n < 2 {
            return Err(Error::InvalidArgument("grid_points must be at least 2".into()));
        }
        Ok(uniform_grid(n, o.horizon.unwrap_or(1.0)))
    };
    let single = match kind.as_str() {
        "fig3_left" => gen_fig3(Fig3::Left { n: Opts::need(&o.branch, "branch")? }, m, seed)?,
        "fig3_right" => gen_fig3(Fig3::Right, m, seed)?,
        "fig3_mixture" => gen_fig3_mixture(Opts::need(&o.theta, "theta")?, Opts::need(&o.branch, "branch")?, m, seed)?,
        "brownian" => gen_brownian(o.dim.unwrap_or(1), m, &grid()?, seed)?,
        "fbm" => gen_fbm(Opts::need(&o.hurst, "hurst")?, o.dim.unwrap_or(1), m, &grid()?, seed)?,
        "spring_chain" => {
            let cfg = SpringConfig {
                noise: o.noise.unwrap_or(SpringConfig::default().noise),
                ..SpringConfig::default()
            };
            let bodies = gen_spring_system(&chain_adjacency(o.bodies.unwrap_or(3)), &cfg, m, seed)?;
            return write_dir_atomic(&out, |d| {
                for (k, e) in bodies.iter().enumerate() {
                    match fmt.as_str() {
                        "json" => fs::write(d.join(format!("body_{k}.jsonl")), to_jsonl(e))?,
                        _ => write_csv_dir(e, d.join(format!("body_{k}")))?,
                    }
                }
                Ok(())
            });
        }
        other => return Err(Error::InvalidArgument(format!("unknown generator kind {other:?}"))),
    };
    write_ensemble(&single, &out, &fmt)
}

pub fn gram(o: &Opts) -> Result<()> {
    let out = out_path(o)?;
    let fmt = format(o, &["bin", "csv", "json"])?;
    let cfg = hoc(o)?;
    let x = cfg.prepare(&load(Opts::need(&o.x, "x")?)?)?;
    let y = match &o.y {
        Some(p) => cfg.prepare(&load(p)?)?,
        None => x.clone(),
    };
    x.check_compatible(&y)?;
    let full = o.full.unwrap_or(true);
    let solver = cfg.solver();
    let field = if cfg.order == 1 && !full {
        let k = first_order_gram_terminal(&x, &y, &solver)?;
        GramField::from_vec(x.len(), y.len(), 1, 1, k.transpose().iter().cloned().collect())?
    } else {
        let mut gxx = first_order_gram(&x, &x, &solver)?;
        let mut gxy = first_order_gram(&x, &y, &solver)?;
        let mut gyy = first_order_gram(&y, &y, &solver)?;
        for level in 2..=cfg.order {
            let last = level == cfg.order;
            let nxy = higher_order_gram(&gxx, &gxy, &gyy, &cfg, x.times(), full || !last)?;
            if !last {
                gxx = higher_order_gram(&gxx, &gxx, &gxx, &cfg, x.times(), true)?;
                gyy = higher_order_gram(&gyy, &gyy, &gyy, &cfg, x.times(), true)?;
            }
            gxy = nxy;
        }
        gxy
    };
    match fmt.as_str() {
        "bin" => write_atomic(&out, &field.to_bytes()),
        "csv" => write_atomic(&out, field.to_csv().as_bytes()),
        _ => {
            let (m, n, p, q) = field.shape();
            #[derive(serde::Serialize)]
            struct Dump<'a> {
                shape: [usize; 4],
                data: &'a [f64],
            }
            write_json(&out, &Dump { shape: [m, n, p, q], data: field.data() })
        }
    }
}

pub fn mmd(o: &Opts) -> Result<()> {
    let out = out_path(o)?;
    format(o, &["json"])?;
    let cfg = hoc(o)?;
    let x = load(Opts::need(&o.x, "x")?)?;
    let y = load(Opts::need(&o.y, "y")?)?;
    let est = higher_order_mmd(&x, &y, &cfg, variant(o, Variant::Unbiased)?)?;
    write_json(&out, &est)
}

pub fn test2(o: &Opts) -> Result<()> {
    let out = out_path(o)?;
    format(o, &["json"])?;
    let cfg = hoc(o)?;
    let x = load(Opts::need(&o.x, "x")?)?;
    let y = load(Opts::need(&o.y, "y")?)?;
    let report = two_sample_test_with(
        &x,
        &y,
        &cfg,
        variant(o, Variant::Unbiased)?,
        o.level.unwrap_or(0.05),
        o.permutations.unwrap_or(200),
        o.seed.unwrap_or(0),
    )?;
    write_json(&out, &report)?;
    if let Some(p) = &o.null_out {
        write_atomic(p, report.null_csv().as_bytes())?;
    }
    Ok(())
}

fn ci_config(o: &Opts) -> Result<CiConfig> {
    let d = CiConfig::default();
    let cfg = CiConfig {
        epsilon: o.epsilon.unwrap_or(d.epsilon),
        solver: PdeSolver::new(
            match &o.scheme {
                Some(s) => s.parse()?,
                None => d.solver.scheme,
            },
            o.refinement.unwrap_or(d.solver.refinement),
        )?,
        time_augment: o.time_augment,
        product_kernel: o.product_kernel.unwrap_or(d.product_kernel),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn ci(o: &Opts) -> Result<()> {
    let out = out_path(o)?;
    format(o, &["json"])?;
    let cfg = ci_config(o)?;
    let x = load(Opts::need(&o.x, "x")?)?;
    let y = load(Opts::need(&o.y, "y")?)?;
    let z = o.z.as_ref().map(load).transpose()?;
    let mode = match o.mode.as_deref().unwrap_or("permutation") {
        "permutation" => AlphaMode::Permutation { level: o.level.unwrap_or(0.05) },
        "threshold" => AlphaMode::Threshold { alpha: Opts::need(&o.alpha, "alpha")? },
        other => return Err(Error::InvalidArgument(format!("unknown mode {other:?} (threshold|permutation)"))),
    };
    let stat = ci_test(&x, &y, z.as_ref(), &cfg, o.permutations.unwrap_or(200), o.seed.unwrap_or(0), mode)?;
    write_json(&out, &stat)
}

pub fn kpc(o: &Opts) -> Result<()> {
    let out = out_path(o)?;
    let fmt = format(o, &["json", "csv"])?;
    let d = KpcConfig::default();
    let cfg = KpcConfig {
        ci: ci_config(o)?,
        alpha: o.alpha.unwrap_or(d.alpha),
        max_cond_size: o.max_cond_size.unwrap_or(d.max_cond_size),
        level_zero: o.level_zero.unwrap_or(d.level_zero),
        normalize: o.normalize.unwrap_or(d.normalize),
    };
    let vars = load_many(&Opts::need(&o.inputs, "inputs")?)?;
    let graph = kpc_skeleton(&vars, &cfg)?;
    match fmt.as_str() {
        "json" => write_json(&out, &graph),
        _ => write_atomic(&out, graph.edge_csv().as_bytes()),
    }
}

pub fn dr_fit(o: &Opts) -> Result<()> {
    let out = out_path(o)?;
    format(o, &["json"])?;
    let base = hoc(o)?;
    let bags = load_many(&Opts::need(&o.bags, "bags")?)?;
    let labels = Opts::need(&o.labels, "labels")?;
    if labels.len() != bags.len() {
        return Err(Error::InvalidArgument(format!("{} labels for {} bags", labels.len(), bags.len())));
    }
    let (cfg, sigma, ridge, d2) = if o.cv_sigmas.is_some() || o.cv_ridges.is_some() || o.cv_orders.is_some() {
        let orders = o.cv_orders.clone().unwrap_or(vec![base.order]);
        let sigmas = match (&o.cv_sigmas, o.sigma) {
            (Some(s), _) => s.clone(),
            (None, Some(s)) => vec![s],
            (None, None) => return Err(Error::InvalidArgument("cv needs cv_sigmas or sigma".into())),
        };
        let ridges = o.cv_ridges.clone().unwrap_or(vec![o.ridge.unwrap_or(1e-3)]);
        let mats = orders
            .iter()
            .map(|&k| {
                let c = HigherOrderConfig { order: k, ..base.clone() };
                c.validate()?;
                Ok((k, pairwise_mmd(&bags, &c)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let cv = cv_grid_search_from_mmd(&mats, &labels, &sigmas, &ridges, o.folds.unwrap_or(5), o.seed.unwrap_or(0))?;
        if let Some(p) = &o.cv_out {
            write_json(p, &cv)?;
        }
        let d2 = mats.into_iter().find(|(k, _)| *k == cv.best.order).expect("winner order").1;
        (HigherOrderConfig { order: cv.best.order, ..base }, cv.best.sigma, cv.best.ridge, d2)
    } else {
        let d2 = pairwise_mmd(&bags, &base)?;
        (base, Opts::need(&o.sigma, "sigma")?, o.ridge.unwrap_or(1e-3), d2)
    };
    let model = fit_krr_from_mmd(&d2, &labels, &cfg, sigma, ridge, bags.iter().map(fingerprint).collect())?;
    write_json(&out, &model)
}

pub fn dr_predict(o: &Opts) -> Result<()> {
    let out = out_path(o)?;
    let fmt = format(o, &["csv", "json"])?;
    let model_path = Opts::need(&o.model, "model")?;
    let model: DrModel = serde_json::from_str(&fs::read_to_string(&model_path)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", model_path.display())))?;
    let train = load_many(&Opts::need(&o.bags, "bags")?)?;
    let new_paths = Opts::need(&o.new_bags, "new")?;
    let new = load_many(&new_paths)?;
    if train.len() != model.alpha.len() {
        return Err(Error::InvalidArgument("training bag count does not match the model".into()));
    }
    if train.iter().map(fingerprint).ne(model.bag_fingerprints.iter().cloned()) {
        return Err(Error::InvalidArgument("training bags do not match the model fingerprints".into()));
    }
    let pred = predict_from_mmd(&model, &cross_mmd_matrix(&train, &new, &model.config)?)?;
    match fmt.as_str() {
        "csv" => {
            let mut s = String::from("bag,prediction\n");
            for (p, v) in new_paths.iter().zip(&pred) {
                s.push_str(&format!("{},{}\n", p.display(), fmt_f64(*v)));
            }
            write_atomic(&out, s.as_bytes())
        }
        _ => {
            #[derive(serde::Serialize)]
            struct Row {
                bag: String,
                prediction: f64,
            }
            let rows: Vec<Row> = new_paths
                .iter()
                .zip(&pred)
                .map(|(p, v)| Row { bag: p.display().to_string(), prediction: *v })
                .collect();
            write_json(&out, &rows)
        }
    }
}
