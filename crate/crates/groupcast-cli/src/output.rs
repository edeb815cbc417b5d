//! Deterministic document rendering. Floats are written with Rust's
//! shortest round-trip formatting, so identical runs produce identical
//! bytes regardless of worker count.

use std::path::{Path, PathBuf};

use serde::Serialize;

use groupcast::analysis::{self, RateSamples};
use groupcast::{Error, Result};

use crate::Format;

pub struct Document {
    pub rendered: String,
    pub out: Option<PathBuf>,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn join_f64(vs: &[f64]) -> String {
    vs.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(" ")
}

pub fn grouping_string(groups: &[Vec<usize>]) -> String {
    let inner: Vec<String> = groups
        .iter()
        .map(|g| {
            format!(
                "[{}]",
                g.iter()
                    .map(|u| u.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            )
        })
        .collect();
    format!("[{}]", inner.join(","))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::ParseError(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// key,value CSV with a header row. Values containing commas are quoted.
pub fn key_value_csv(rows: &mut Vec<(String, String)>) -> String {
    let mut text = String::from("key,value\n");
    for (k, v) in rows.drain(..) {
        if v.contains(',') {
            text.push_str(&format!("{k},\"{v}\"\n"));
        } else {
            text.push_str(&format!("{k},{v}\n"));
        }
    }
    text
}

pub fn write_document(doc: &Document) -> Result<()> {
    match &doc.out {
        Some(path) => std::fs::write(path, &doc.rendered)?,
        None => print!("{}", doc.rendered),
    }
    Ok(())
}

#[derive(Serialize)]
struct SummaryDoc {
    scheme: String,
    n_u: usize,
    n_t: usize,
    p_t_linear: f64,
    g: usize,
    seed: u64,
    trials: usize,
    mean_bpcu: f64,
    std_bpcu: f64,
    min_bpcu: f64,
    q25_bpcu: f64,
    median_bpcu: f64,
    q75_bpcu: f64,
    max_bpcu: f64,
    critical_rate_1e3_bpcu: Option<f64>,
    histogram_bin_width: f64,
    histogram_counts: Vec<usize>,
}

#[derive(Serialize)]
struct SamplesDoc {
    scheme: String,
    seed: u64,
    samples: Vec<SampleRow>,
}

#[derive(Serialize)]
struct SampleRow {
    trial: usize,
    sum_rate_bpcu: f64,
    channel_fingerprint: String,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = (q * (sorted.len() as f64 - 1.0)).floor() as usize;
    sorted[idx]
}

fn summarize(samples: &RateSamples) -> SummaryDoc {
    let mut sorted = samples.samples.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let critical = analysis::critical_rate(&samples.samples, 1e-3).ok();
    let (width, counts) = analysis::histogram(&samples.samples, 100);
    SummaryDoc {
        scheme: samples.scheme.clone(),
        n_u: samples.n_u,
        n_t: samples.n_t,
        p_t_linear: samples.p_t,
        g: samples.g,
        seed: samples.seed,
        trials: samples.samples.len(),
        mean_bpcu: mean,
        std_bpcu: var.sqrt(),
        min_bpcu: sorted[0],
        q25_bpcu: quantile(&sorted, 0.25),
        median_bpcu: quantile(&sorted, 0.5),
        q75_bpcu: quantile(&sorted, 0.75),
        max_bpcu: *sorted.last().unwrap(),
        critical_rate_1e3_bpcu: critical,
        histogram_bin_width: width,
        histogram_counts: counts,
    }
}

fn samples_csv(samples: &RateSamples) -> String {
    let mut text = String::from("trial,scheme,sum_rate_bpcu\n");
    for (t, rate) in samples.samples.iter().enumerate() {
        text.push_str(&format!("{t},{},{}\n", samples.scheme, fmt_f64(*rate)));
    }
    text
}

fn summary_csv(doc: &SummaryDoc) -> String {
    let mut rows: Vec<(String, String)> = vec![
        ("scheme".into(), doc.scheme.clone()),
        ("n_u".into(), doc.n_u.to_string()),
        ("n_t".into(), doc.n_t.to_string()),
        ("p_t_linear".into(), fmt_f64(doc.p_t_linear)),
        ("g".into(), doc.g.to_string()),
        ("seed".into(), doc.seed.to_string()),
        ("trials".into(), doc.trials.to_string()),
        ("mean_bpcu".into(), fmt_f64(doc.mean_bpcu)),
        ("std_bpcu".into(), fmt_f64(doc.std_bpcu)),
        ("min_bpcu".into(), fmt_f64(doc.min_bpcu)),
        ("q25_bpcu".into(), fmt_f64(doc.q25_bpcu)),
        ("median_bpcu".into(), fmt_f64(doc.median_bpcu)),
        ("q75_bpcu".into(), fmt_f64(doc.q75_bpcu)),
        ("max_bpcu".into(), fmt_f64(doc.max_bpcu)),
        (
            "critical_rate_1e3_bpcu".into(),
            doc.critical_rate_1e3_bpcu.map(fmt_f64).unwrap_or_default(),
        ),
        (
            "histogram_bin_width".into(),
            fmt_f64(doc.histogram_bin_width),
        ),
        (
            "histogram_counts".into(),
            doc.histogram_counts
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        ),
    ];
    key_value_csv(&mut rows)
}

/// Write the samples and summary documents for a Monte Carlo run. With an
/// output base path the two land in `<base>.samples.<ext>` and
/// `<base>.summary.<ext>`; otherwise both print to stdout.
pub fn write_montecarlo(samples: &RateSamples, format: Format, out: Option<&Path>) -> Result<()> {
    let summary = summarize(samples);
    let (samples_text, summary_text, ext) = match format {
        Format::Json => {
            let rows: Vec<SampleRow> = samples
                .samples
                .iter()
                .zip(&samples.fingerprints)
                .enumerate()
                .map(|(t, (rate, fp))| SampleRow {
                    trial: t,
                    sum_rate_bpcu: *rate,
                    channel_fingerprint: format!("{fp:016x}"),
                })
                .collect();
            let doc = SamplesDoc {
                scheme: samples.scheme.clone(),
                seed: samples.seed,
                samples: rows,
            };
            (to_json(&doc)?, to_json(&summary)?, "json")
        }
        Format::Csv => (samples_csv(samples), summary_csv(&summary), "csv"),
    };
    match out {
        Some(base) => {
            let base_str = base.to_string_lossy();
            std::fs::write(format!("{base_str}.samples.{ext}"), samples_text)?;
            std::fs::write(format!("{base_str}.summary.{ext}"), summary_text)?;
            Ok(())
        }
        None => {
            print!("{samples_text}");
            print!("{summary_text}");
            Ok(())
        }
    }
}
