use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::{json, Value};
use spectral_surgery::gauge::{procrustes_alignment_demo, scaling_experiment, GaugeConfig};
use spectral_surgery::gp::{self, GpState};
use spectral_surgery::spectral::{
    angle_report, angle_report_streaming, read_report_csv, summarize, ReportWriter,
};
use spectral_surgery::store::{from_bytes, save_checkpoint, Checkpoint};
use spectral_surgery::surgery::{apply_plan, RankScope, Role, SurgeryPlan, DEFAULT_PATTERN};
use spectral_surgery::Matrix64;

use crate::manifest::RunManifest;
use crate::{Failure, GaugeArgs, GpCommand, Mode, RankSpec, SpectraArgs, SummaryArgs, SurgeryArgs};

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load(manifest: &mut RunManifest, path: &Path) -> anyhow::Result<Checkpoint> {
    let bytes = manifest.read_input(path)?;
    from_bytes(&bytes).with_context(|| format!("{}", path.display()))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

pub fn spectra(args: SpectraArgs, angles_only: bool) -> Result<(), Failure> {
    let mut m = RunManifest::new(if angles_only { "angles" } else { "spectra" });
    m.flag("base", path_str(&args.base))
        .flag("target", path_str(&args.target))
        .flag("pattern", &args.pattern)
        .flag("out", args.out.as_deref().map(path_str));
    let base = load(&mut m, &args.base)?;
    let tgt = load(&mut m, &args.target)?;

    let mut writer = ReportWriter::new(output(args.out.as_deref())?, angles_only)?;
    let batch = rayon::current_num_threads();
    angle_report_streaming(&base, &tgt, &args.pattern, batch, |rows| writer.write_rows(&rows))?;
    writer.finish()?.flush()?;

    m.note("spectrum_alignment", json!("by rank index"));
    m.note("angle_units", json!("degrees"));
    m.emit(args.out.as_deref())?;
    Ok(())
}

fn rank_scope(head: Option<RankSpec>, tail: Option<RankSpec>) -> Result<RankScope, Failure> {
    let head = head.unwrap_or(RankSpec::Full);
    let scope = match (head, tail) {
        (RankSpec::Full, None | Some(RankSpec::Count(0))) => RankScope::full(),
        (RankSpec::None, None | Some(RankSpec::Count(0))) => RankScope::none(),
        (RankSpec::Full | RankSpec::None, Some(_)) => {
            return Err(Failure::Usage(
                "--rank-tail needs a numeric --rank-head (K or f:FRAC)".into(),
            ))
        }
        (RankSpec::Count(h), None) => RankScope::count(h, 0),
        (RankSpec::Count(h), Some(RankSpec::Count(t))) => RankScope::count(h, t),
        (RankSpec::Fraction(h), None) => RankScope::fraction(h, 0.0),
        (RankSpec::Fraction(h), Some(RankSpec::Fraction(t))) => RankScope::fraction(h, t),
        _ => {
            return Err(Failure::Usage(
                "--rank-head and --rank-tail must both be counts or both fractions".into(),
            ))
        }
    };
    Ok(scope)
}

pub fn surgery(args: SurgeryArgs) -> Result<(), Failure> {
    let mut m = RunManifest::new("surgery");
    let plan = match &args.plan {
        Some(path) => {
            let bytes = m.read_input(path)?;
            let text = String::from_utf8(bytes).context("plan file is not UTF-8")?;
            m.flag("plan_file", path_str(path));
            SurgeryPlan::from_json(&text)?
        }
        None => {
            let mode = args.mode.ok_or_else(|| {
                Failure::Usage("surgery needs either --plan or --mode".into())
            })?;
            let (direction_source, value_source) = match mode {
                Mode::Directions => (Role::Base, Role::Target),
                Mode::Values => (Role::Target, Role::Base),
            };
            SurgeryPlan {
                direction_source,
                value_source,
                rank: rank_scope(args.rank_head, args.rank_tail)?,
                layers: args.layers.clone(),
                pattern: args.pattern.clone().unwrap_or_else(|| DEFAULT_PATTERN.to_string()),
                include_untied: args.include_untied,
            }
        }
    };
    m.flag("base", path_str(&args.base))
        .flag("target", path_str(&args.target))
        .flag("out", path_str(&args.out))
        .flag("plan", &plan);

    let base = load(&mut m, &args.base)?;
    let tgt = load(&mut m, &args.target)?;
    let merged = apply_plan(&base, &tgt, &plan)?;
    save_checkpoint(&merged, &args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    m.emit(Some(&args.out))?;
    Ok(())
}

pub fn gauge(args: GaugeArgs) -> Result<(), Failure> {
    let [d_in, d_mid, d_out] = <[usize; 3]>::try_from(args.dims.as_slice())
        .map_err(|_| Failure::Usage("--dims takes exactly three sizes IN,MID,OUT".into()))?;
    let config = GaugeConfig {
        d_in,
        d_mid,
        d_out,
        eta_grid: args.eta_grid.clone(),
        trials: args.trials,
        seed: args.seed,
        lambda: args.lambda,
    };
    let mut m = RunManifest::new("gauge");
    m.flag("dims", &args.dims)
        .flag("eta_grid", &args.eta_grid)
        .flag("trials", args.trials)
        .flag("lambda", args.lambda)
        .flag("out", args.out.as_deref().map(path_str));
    m.seed = Some(args.seed);

    let result = scaling_experiment::<f64>(&config)?;
    let w1 = Matrix64::identity(2);
    let w2 = Matrix64::from_diag(&[1.0, 0.5]);
    let demo = procrustes_alignment_demo::<f64>(&w1, &w2, 10f64.to_radians(), 5, args.seed)?;
    let mut report = serde_json::to_value(&result)?;
    report["alignment"] = json!({
        "w1": "I2",
        "w2": "diag(1, 0.5)",
        "angle_deg": 10.0,
        "samples": 5,
        "rotation_error": demo.rotation_error,
        "aligned_delta": demo.aligned_delta,
        "max_output_diff": demo.max_output_diff,
    });

    let (csv_path, json_path) = match &args.out {
        Some(out) => {
            let json_path = out.with_extension("json");
            let csv_path = if json_path == *out { out.with_extension("csv") } else { out.clone() };
            (Some(csv_path), Some(json_path))
        }
        None => (None, None),
    };
    if let Some(csv_path) = &csv_path {
        let mut w = csv::Writer::from_path(csv_path)
            .with_context(|| format!("cannot create {}", csv_path.display()))?;
        for row in &result.rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    let mut out = output(json_path.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    out.write_all(b"\n")?;
    out.flush()?;
    m.emit(csv_path.as_deref())?;
    Ok(())
}

fn hand(cards: &[String], target: u32) -> Result<GpState, Failure> {
    GpState::from_tokens(cards, target).map_err(Failure::Usage)
}

fn write_text(out: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    let mut w = output(out.map(PathBuf::as_path))?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn gp(cmd: GpCommand) -> Result<(), Failure> {
    match cmd {
        GpCommand::Solve { hand: h, out } => {
            let state = hand(&h.cards, h.target_number)?;
            let mut m = RunManifest::new("gp solve");
            m.flag("cards", &h.cards)
                .flag("rule", h.rule.name())
                .flag("target_number", h.target_number)
                .flag("out", out.as_deref().map(path_str))
                .note("conventions", gp::conventions());
            let found = gp::solve(&state, &h.rule);
            if let Some(eq) = &found {
                write_text(out.as_ref(), &format!("{}\n", eq.source_text))?;
            }
            m.emit(out.as_deref())?;
            match found {
                Some(_) => Ok(()),
                None => Err(Failure::Domain(anyhow::anyhow!(
                    "no solution for {} under the {} rule",
                    h.cards.join(","),
                    h.rule.name()
                ))),
            }
        }
        GpCommand::Validate { hand: h, equation, out } => {
            let state = hand(&h.cards, h.target_number)?;
            let mut m = RunManifest::new("gp validate");
            m.flag("cards", &h.cards)
                .flag("rule", h.rule.name())
                .flag("target_number", h.target_number)
                .flag("equation", &equation)
                .flag("out", out.as_deref().map(path_str))
                .note("conventions", gp::conventions());
            let v = gp::validate(&state, &h.rule, &equation);
            let record = json!({
                "valid": v.valid,
                "reason": v.reason.as_str(),
                "equation": equation,
                "value": v.value_string(),
                "detail": v.detail,
            });
            write_text(out.as_ref(), &format!("{record}\n"))?;
            m.emit(out.as_deref())?;
            if v.valid {
                Ok(())
            } else {
                Err(Failure::Domain(anyhow::anyhow!("equation rejected: {}", v.reason)))
            }
        }
        GpCommand::Deal {
            seed,
            count,
            rule,
            target_number,
            solvable_only,
            out,
        } => {
            if count == 0 {
                return Err(Failure::Usage("--count must be at least 1".into()));
            }
            if target_number == 0 {
                return Err(Failure::Usage("--target-number must be at least 1".into()));
            }
            let mut m = RunManifest::new("gp deal");
            m.flag("count", count)
                .flag("rule", rule.name())
                .flag("target_number", target_number)
                .flag("solvable_only", solvable_only)
                .flag("out", out.as_deref().map(path_str))
                .note("conventions", gp::conventions());
            m.seed = Some(seed);
            let states = gp::deal_with_target(seed, count, &rule, solvable_only, target_number)
                .ok_or_else(|| anyhow::anyhow!("no hand can reach {target_number}"))?;
            let mut text = String::new();
            for s in &states {
                let line = json!({ "cards": s.tokens(), "rule": rule.name(), "target": s.target });
                text.push_str(&line.to_string());
                text.push('\n');
            }
            write_text(out.as_ref(), &text)?;
            m.emit(out.as_deref())?;
            Ok(())
        }
        GpCommand::Score {
            transcripts,
            rule,
            marker,
            out,
        } => {
            let mut m = RunManifest::new("gp score");
            m.flag("transcripts", path_str(&transcripts))
                .flag("rule", rule.name())
                .flag("marker", &marker)
                .flag("out", out.as_deref().map(path_str))
                .note("conventions", gp::conventions());
            let bytes = m.read_input(&transcripts)?;
            let text = String::from_utf8(bytes).context("transcripts are not UTF-8")?;
            let marker = (!marker.is_empty()).then_some(marker.as_str());
            let score = gp::score_transcript_text(&text, &rule, marker)?;
            let mut w = output(out.as_deref())?;
            score.write_jsonl(&mut w)?;
            w.flush()?;
            drop(w);
            if out.is_some() {
                println!("{}", score.summary());
            }
            m.emit(out.as_deref())?;
            Ok(())
        }
    }
}

pub fn report_summary(args: SummaryArgs) -> Result<(), Failure> {
    let mut m = RunManifest::new("report-summary");
    m.flag("bucket_frac", args.bucket_frac)
        .flag("out", args.out.as_deref().map(path_str));
    let rows = match (&args.input, &args.base, &args.target) {
        (Some(input), _, _) => {
            m.flag("input", path_str(input));
            let bytes = m.read_input(input)?;
            read_report_csv(bytes.as_slice()).with_context(|| format!("{}", input.display()))?
        }
        (None, Some(b), Some(t)) => {
            m.flag("base", path_str(b))
                .flag("target", path_str(t))
                .flag("pattern", &args.pattern);
            let base = load(&mut m, b)?;
            let tgt = load(&mut m, t)?;
            angle_report(&base, &tgt, &args.pattern)?
        }
        _ => return Err(Failure::Usage("give --input or both --base and --target".into())),
    };
    let summary = summarize(&rows, args.bucket_frac)?;
    let value: Value = serde_json::to_value(&summary)?;
    let mut w = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    drop(w);
    m.emit(args.out.as_deref())?;
    Ok(())
}
