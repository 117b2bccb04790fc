use std::fmt::Write as _;
use std::path::Path;

use homing_core::dataset::{assemble, build_dataset, render_locations, Dataset};
use homing_core::evaluation::{
    convergence_analysis, evaluate_locations, implied_nest, perimeter_starts, stream_field, Domain, EvalReport,
};
use homing_core::geometry::{angular_error, HeadingAngle};
use homing_core::homing::{fly_all, perimeter_outbounds, straight_line_bound, BatchRun, BatchSummary};
use homing_core::image::GrayImage;
use homing_core::network::{
    forward_input, load_params, output_gradients_wrt_conv2, save_params, train, Architecture, NetworkParams,
    OutputComponent, TrainConfig, TrainingSamples,
};
use homing_core::svg;
use homing_core::world::LandmarkWorld;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::manifest::Outputs;
use crate::{CliError, Command};

/// Runs one command and returns a short human-readable report.
pub fn run(command: Command, cfg: &ExperimentConfig, overrides: &[String]) -> Result<String, CliError> {
    let mut out = Outputs::new(&cfg.out)?;
    let config_text = cfg.to_toml();
    out.write("config.toml", &config_text)?;
    let mut report = match command {
        Command::World => world(cfg, &mut out)?,
        Command::Dataset => dataset(cfg, &mut out)?,
        Command::Train => train_cmd(cfg, &mut out)?,
        Command::Eval => eval(cfg, &mut out)?,
        Command::Stream => stream(cfg, &mut out)?,
        Command::Gradcam => gradcam(cfg, &mut out)?,
        Command::Home => home(cfg, &mut out)?,
        Command::Presets => unreachable!("handled before configuration"),
    };
    let (manifest, artifacts) = out.finish(command.name(), &cfg.name, cfg.seed, &config_text, overrides)?;
    let _ = writeln!(report, "{} artifacts listed in {}", artifacts.len(), manifest.display());
    Ok(report)
}

fn load_model(path: &Path) -> Result<NetworkParams, CliError> {
    if !path.exists() {
        return Err(CliError::MissingInput(format!(
            "model file {} not found; run `homing-bench train` first or set the model path",
            path.display()
        )));
    }
    Ok(load_params(path)?)
}

fn check_model(params: &NetworkParams, cfg: &ExperimentConfig) -> Result<(), CliError> {
    if !params.is_finite() {
        return Err(CliError::Numeric("model holds non-finite parameters".into()));
    }
    let layout = cfg.imaging()?.layout;
    let arch = params.architecture();
    if (arch.input_height, arch.input_width) != (layout.height, layout.width) {
        return Err(CliError::Config(format!(
            "model expects {}x{} views but the imaging configuration produces {}x{}",
            arch.input_height, arch.input_width, layout.height, layout.width
        )));
    }
    Ok(())
}

fn world(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String, CliError> {
    let world = cfg.world()?;
    let imaging = cfg.imaging()?;
    out.write("world.toml", world.to_toml())?;
    let cat = imaging.capture_catadioptric(&world, world.nest)?;
    out.write("nest_catadioptric.pgm", cat.image.to_pgm_bytes())?;
    let pano = homing_core::omni::rectify(&cat, HeadingAngle::NORTH, imaging.layout)?;
    pano.save(&out.path("nest_panorama.pgm"))?;
    out.record("nest_panorama.pgm")?;
    out.record("nest_panorama.toml")?;
    Ok(format!(
        "world {:?}: {} landmarks, nest at ({}, {})\n",
        world.name,
        world.landmarks.len(),
        world.nest.x,
        world.nest.y
    ))
}

fn build(cfg: &ExperimentConfig) -> Result<(LandmarkWorld, Dataset), CliError> {
    let world = cfg.world()?;
    let spec = cfg.dataset_spec(&world)?;
    let ds = build_dataset(&world, &spec, &cfg.imaging()?)?;
    Ok((world, ds))
}

fn dataset(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String, CliError> {
    let (_, ds) = build(cfg)?;
    let image_dir = cfg.dataset.save_images.then_some("images");
    if image_dir.is_some() {
        ds.save_images(&out.path("images"))?;
        for i in 0..ds.locations.len() {
            out.record(&format!("images/location_{i:05}.pgm"))?;
            out.record(&format!("images/location_{i:05}.toml"))?;
        }
    }
    out.write("dataset.csv", ds.manifest_csv(image_dir))?;
    let summary = format!(
        "locations: {}\ngaze_count: {}\nexamples: {}\nrenders: {}\n",
        ds.locations.len(),
        ds.spec.gaze_count,
        ds.len(),
        ds.renders
    );
    out.write("dataset_summary.txt", &summary)?;
    Ok(summary)
}

/// Mean angular error of `params` on every `stride`-th example.
pub fn training_error(params: &NetworkParams, ds: &Dataset, stride: usize) -> Result<f64, CliError> {
    let errs: Vec<f64> = (0..ds.len())
        .step_by(stride.max(1))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&i| {
            let mut buf = Vec::new();
            ds.input_into(i, &mut buf);
            let input: Vec<f64> = buf.iter().map(|&v| v as f64).collect();
            let (pred, _) = forward_input(params, &input)?;
            // an undirected prediction is as wrong as it can be
            Ok(angular_error(pred, ds.examples[i].label).unwrap_or(180.0))
        })
        .collect::<Result<_, homing_core::Error>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len().max(1) as f64)
}

fn train_cmd(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String, CliError> {
    let (_, ds) = build(cfg)?;
    let tc = cfg.train_config()?;
    let (params, trace) = train(Architecture::for_layout(&ds.imaging.layout), &ds, &tc)?;
    if !params.is_finite() {
        return Err(CliError::Numeric("trained parameters are not finite".into()));
    }
    let model = out.path("model.bin");
    save_params(&params, &model)?;
    out.record("model.bin")?;
    out.write("loss.csv", trace.to_csv())?;
    let mut summary = format!(
        "examples: {}\nsteps: {}\nparameters: {}\nmean_loss: {}\nfinal_window_loss: {}\n",
        ds.len(),
        trace.steps,
        params.param_count(),
        trace.mean_loss,
        trace.entries.last().map_or(f64::NAN, |e| e.1)
    );
    if cfg.train.error_stride > 0 {
        let err = training_error(&params, &ds, cfg.train.error_stride)?;
        let _ = writeln!(summary, "training_error_deg: {err}");
    }
    out.write("train_summary.txt", &summary)?;
    Ok(summary)
}

fn eval_summary(tag: &str, r: &EvalReport) -> String {
    let implied = implied_nest(r)
        .map(|p| format!("{}, {}", p.x, p.y))
        .unwrap_or_else(|| "undefined".into());
    format!(
        "[{tag}]\ngaze_deg: {}\nlocations: {}\nmean_error_deg: {}\nstd_error_deg: {}\nundefined: {}\nmean_confidence: {}\nimplied_nest: {implied}\n",
        r.gaze.degrees(),
        r.records.len(),
        r.mean_error,
        r.std_error,
        r.undefined,
        r.mean_confidence()
    )
}

fn eval(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String, CliError> {
    let params = load_model(&cfg.model_path(&cfg.eval.model))?;
    check_model(&params, cfg)?;
    let world = cfg.world()?;
    let imaging = cfg.imaging()?;
    let locations = cfg.eval.grid.resolve(world.nest)?.locations(world.nest)?;
    let gazes: Vec<HeadingAngle> = cfg.eval.gazes_deg.iter().map(|&d| HeadingAngle::from_degrees(d)).collect();
    let reports = evaluate_locations(&[&params], &world, &imaging, &locations, &gazes)?.remove(0);
    let mut summary = String::new();
    for (i, r) in reports.iter().enumerate() {
        let name = if i == 0 { "eval.csv".to_string() } else { format!("eval_gaze_{i}.csv") };
        out.write(&name, r.to_csv())?;
        summary.push_str(&eval_summary(&name, r));
    }
    if cfg.eval.svg {
        out.write("eval_quiver.svg", svg::quiver(&reports[0], &world, "predicted home vectors"))?;
        out.write("eval_error.svg", svg::error_heatmap(&reports[0], &world, "angular error"))?;
    }
    if let Some(deg) = cfg.eval.rotate_landmarks_deg {
        let rotated = world.with_array_rotated(deg)?;
        let after = evaluate_locations(&[&params], &rotated, &imaging, &locations, &gazes[..1])?.remove(0).remove(0);
        out.write("eval_rotated.csv", after.to_csv())?;
        summary.push_str(&eval_summary("eval_rotated.csv", &after));
        if let (Some(a), Some(b)) = (implied_nest(&reports[0]), implied_nest(&after)) {
            let _ = writeln!(summary, "implied_nest_shift_m: {}", a.distance(b));
        }
        if cfg.eval.svg {
            out.write(
                "eval_rotated_quiver.svg",
                svg::quiver(&after, &rotated, &format!("landmarks rotated {deg} deg")),
            )?;
        }
    }
    out.write("eval_summary.txt", &summary)?;
    Ok(summary)
}

fn stream(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String, CliError> {
    let params = load_model(&cfg.model_path(&cfg.stream.model))?;
    check_model(&params, cfg)?;
    let world = cfg.world()?;
    let imaging = cfg.imaging()?;
    let pattern = cfg.dataset.pattern.resolve(world.nest)?;
    let s = &cfg.stream;
    let starts = perimeter_starts(world.nest, s.radius, s.starts);
    let config = s.stream_config();
    let domain = Domain::around(pattern.bounds()?, config.domain_margin);
    let traces = stream_field(&params, &world, &imaging, &starts, &config, &domain)?;
    for (i, t) in traces.iter().enumerate() {
        out.write(&format!("stream_{i:02}.csv"), t.to_csv())?;
    }
    out.write("streams.svg", svg::streams(&traces, &world, "stream field"))?;
    let mut summary = String::from("start,termination,points,end_x,end_y,end_distance\n");
    for (i, t) in traces.iter().enumerate() {
        let e = t.end();
        let _ = writeln!(summary, "{i},{:?},{},{},{},{}", t.termination, t.points.len(), e.x, e.y, e.distance(world.nest));
    }
    if !traces.is_empty() {
        let c = convergence_analysis(&traces, world.nest)?;
        let _ = writeln!(
            summary,
            "\ncentroid: {}, {}\ncentroid_distance_m: {}\ndispersion_m: {}",
            c.centroid.x, c.centroid.y, c.centroid_distance, c.dispersion
        );
    }
    out.write("convergence.txt", &summary)?;
    Ok(summary)
}

fn gradcam(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String, CliError> {
    let params = load_model(&cfg.model_path(&cfg.gradcam.model))?;
    check_model(&params, cfg)?;
    let world = cfg.world()?;
    let imaging = cfg.imaging()?;
    let g = &cfg.gradcam;
    let positions = perimeter_starts(world.nest, g.radius, g.locations);
    let gaze = HeadingAngle::from_degrees(g.gaze_deg);
    let arch = params.architecture().clone();
    let (k, s) = (arch.kernel, arch.stride);
    let mut csv = String::from("component,row,input_row_first,input_row_last,elevation_top_deg,elevation_bottom_deg,mean_abs_gradient\n");
    let mut summary = String::new();
    for (component, tag) in [(OutputComponent::X, "x"), (OutputComponent::Y, "y")] {
        let maps = positions
            .par_iter()
            .map(|&p| {
                let view = imaging.capture(&world, p, gaze)?;
                output_gradients_wrt_conv2(&params, &view, component)
            })
            .collect::<Result<Vec<_>, homing_core::Error>>()?;
        let (h, w) = (maps[0].height, maps[0].width);
        let mut mag = vec![0.0; h * w];
        for m in &maps {
            for (acc, v) in mag.iter_mut().zip(m.magnitude()) {
                *acc += v / maps.len() as f64;
            }
        }
        let mut best = (0, 0.0);
        for row in 0..h {
            let mean = mag[row * w..(row + 1) * w].iter().sum::<f64>() / w as f64;
            // receptive field of one cell of the second convolution
            let first = row * s * s;
            let last = (first + (k - 1) * s + k - 1).min(imaging.layout.height - 1);
            let (top, bottom) = (
                imaging.layout.row_elevation(first).to_degrees(),
                imaging.layout.row_elevation(last).to_degrees(),
            );
            let _ = writeln!(csv, "{tag},{row},{first},{last},{top},{bottom},{mean}");
            if mean > best.1 {
                best = (row, mean);
            }
        }
        let peak = mag.iter().cloned().fold(0.0, f64::max).max(1e-300);
        let img = GrayImage::from_vec(w, h, mag.iter().map(|&v| (v / peak) as f32).collect())?;
        out.write(&format!("gradcam_{tag}.pgm"), img.to_pgm_bytes())?;
        let _ = writeln!(summary, "output {tag}: strongest conv2 row {} (mean |gradient| {})", best.0, best.1);
    }
    out.write("gradcam_rows.csv", &csv)?;
    out.write("gradcam_summary.txt", &summary)?;
    Ok(summary)
}

fn home(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String, CliError> {
    let world = cfg.world()?;
    let imaging = cfg.imaging()?;
    let spec = cfg.mission_spec(&world)?;
    let outbounds = perimeter_outbounds(cfg.mission.outbound_count, cfg.mission.outbound_distance);
    let positions = spec.pattern.locations(world.nest)?;
    let rendered = render_locations(&world, &imaging, &positions)?;
    let mut runs: Vec<BatchRun> = Vec::new();
    let base = cfg.train_config()?;
    for seed in cfg.mission_seeds() {
        let ds_spec = homing_core::dataset::DatasetSpec {
            label_noise_sigma: cfg.dataset.label_noise_sigma,
            ..spec.dataset_spec(seed)
        };
        let ds = assemble(world.nest, &ds_spec, &imaging, rendered.clone())?;
        let tc = TrainConfig { init_seed: seed, ..base.clone() };
        let (params, trace) = train(Architecture::for_layout(&imaging.layout), &ds, &tc)?;
        save_params(&params, &out.path(&format!("model_seed{seed}.bin")))?;
        out.record(&format!("model_seed{seed}.bin"))?;
        out.write(&format!("loss_seed{seed}.csv"), trace.to_csv())?;
        runs.extend(fly_all(&world, &imaging, &spec, &params, &outbounds, seed)?);
    }
    for r in &runs {
        out.write(&format!("run_seed{}_start{:02}.csv", r.seed, r.start_index), r.run.to_csv())?;
    }
    let summary = BatchSummary::from_runs(&runs, outbounds.len());
    let mut text = summary.to_text(&runs);
    let within = runs
        .iter()
        .filter(|r| r.run.success)
        .all(|r| r.run.homing_steps >= straight_line_bound(r.run.start_distance, spec.success_radius, spec.homing_step));
    let _ = writeln!(text, "\nsuccessful_runs_respect_straight_line_bound: {within}");
    out.write("homing_summary.txt", &text)?;
    let refs: Vec<_> = runs.iter().map(|r| &r.run).collect();
    out.write("missions.svg", svg::missions(&refs, &world, &format!("{} homing", cfg.name)))?;
    Ok(format!(
        "runs: {}\nsuccesses: {}\nmean_homing_steps: {:.2}\n",
        summary.runs, summary.successes, summary.mean_steps
    ))
}
