//! Command implementations.

use std::process::ExitCode;

use serde::Serialize;

use groupcast::analysis::{self, Scheme};
use groupcast::channel::{self, ChannelMatrix, RngSeed};
use groupcast::fastpath;
use groupcast::grouping::{self, Grouping};
use groupcast::powalloc;
use groupcast::precoder;
use groupcast::search;
use groupcast::{Error, Result};

use crate::output::{self, Document};
use crate::{
    exit_code_for, ChannelArgs, Format, GroupAlgo, GroupArgs, MonteCarloArgs, RateArgs, SchemeArg,
    VerifyArgs,
};

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Seed for channel-independent random groupings, derived from the master
/// seed (matches the derivation inside the analysis module).
fn grouping_seed(master: u64) -> RngSeed {
    RngSeed::new(master ^ 0x9e37_79b9_7f4a_7c15, 0)
}

fn load_source(args: &ChannelArgs) -> Result<ChannelMatrix> {
    if let Some(path) = &args.channel {
        return channel::load_channel(path);
    }
    if args.builtin_hex {
        return Ok(channel::builtin_hex());
    }
    if let Some(dims) = &args.rayleigh {
        return channel::rayleigh(dims[0], dims[1], RngSeed::new(args.seed, 0));
    }
    Err(Error::ParseError(
        "no channel source: pass --channel, --builtin-hex or --rayleigh".into(),
    ))
}

fn check_group_size(n_users: usize, g: usize) -> Result<()> {
    if g == 0 || !n_users.is_multiple_of(g) {
        return Err(Error::InvalidGrouping(format!(
            "group size {g} does not divide {n_users} users"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct RateDoc {
    n_users: usize,
    n_tx: usize,
    channel_fingerprint: String,
    snr_db: f64,
    p_t_linear: f64,
    scheme: String,
    g: usize,
    grouping: Vec<Vec<usize>>,
    per_user_rates_bpcu: Vec<f64>,
    per_group_rates_bpcu: Vec<f64>,
    sum_rate_bpcu: f64,
    water_level: Option<f64>,
    powers: Vec<f64>,
    residual_interference: f64,
}

fn scheme_grouping(args: &RateArgs, h: &ChannelMatrix, p_t: f64) -> Result<Grouping> {
    let n = h.n_users();
    let g = args.g;
    Ok(match args.scheme {
        SchemeArg::Zf => Grouping::singletons(n),
        SchemeArg::Zfdp => Grouping::single_group(n),
        SchemeArg::Random => {
            check_group_size(n, g)?;
            grouping::random_grouping(n, g, grouping_seed(args.channel.seed))?
        }
        SchemeArg::Guga => {
            check_group_size(n, g)?;
            let gains = powalloc::zf_gains(h)?;
            let p0 = powalloc::waterfill(&gains, p_t)?;
            search::guga(h, &p0.powers, g)?
        }
        SchemeArg::Jpauga => {
            check_group_size(n, g)?;
            search::jpauga(h, p_t, g, args.max_itr, args.rel_threshold)?.grouping
        }
        SchemeArg::Brute => {
            check_group_size(n, g)?;
            search::brute_force_optimal(h, p_t, g, args.budget)?.grouping
        }
    })
}

pub fn cmd_rate(args: &RateArgs) -> Result<()> {
    let h = load_source(&args.channel)?;
    let p_t = db_to_linear(args.snr_db);
    let grouping = scheme_grouping(args, &h, p_t)?;
    let g = grouping.group_size();
    let report = precoder::sum_rate_opt_power(&h, p_t, &grouping)?;
    let d = precoder::build_transmit_matrices(&h, &grouping, &report.powers)?;
    let residual = precoder::nulling_residual(&h, &grouping, &d);
    let doc = RateDoc {
        n_users: h.n_users(),
        n_tx: h.n_tx(),
        channel_fingerprint: format!("{:016x}", fastpath::channel_fingerprint(&h)),
        snr_db: args.snr_db,
        p_t_linear: p_t,
        scheme: scheme_tag(args.scheme),
        g,
        grouping: grouping.to_one_based(),
        per_user_rates_bpcu: report.per_user_rates.clone(),
        per_group_rates_bpcu: report.per_group_rates.clone(),
        sum_rate_bpcu: report.sum_rate,
        water_level: report.water_level,
        powers: report.powers.clone(),
        residual_interference: residual,
    };
    let rendered = match args.output.format {
        Format::Json => output::to_json(&doc)?,
        Format::Csv => {
            let mut rows: Vec<(String, String)> = vec![
                ("n_users".into(), doc.n_users.to_string()),
                ("n_tx".into(), doc.n_tx.to_string()),
                (
                    "channel_fingerprint".into(),
                    doc.channel_fingerprint.clone(),
                ),
                ("snr_db".into(), output::fmt_f64(doc.snr_db)),
                ("p_t_linear".into(), output::fmt_f64(doc.p_t_linear)),
                ("scheme".into(), doc.scheme.clone()),
                ("g".into(), doc.g.to_string()),
                ("grouping".into(), output::grouping_string(&doc.grouping)),
                (
                    "per_user_rates_bpcu".into(),
                    output::join_f64(&doc.per_user_rates_bpcu),
                ),
                (
                    "per_group_rates_bpcu".into(),
                    output::join_f64(&doc.per_group_rates_bpcu),
                ),
                ("sum_rate_bpcu".into(), output::fmt_f64(doc.sum_rate_bpcu)),
                (
                    "water_level".into(),
                    doc.water_level.map(output::fmt_f64).unwrap_or_default(),
                ),
                ("powers".into(), output::join_f64(&doc.powers)),
                (
                    "residual_interference".into(),
                    output::fmt_f64(doc.residual_interference),
                ),
            ];
            output::key_value_csv(&mut rows)
        }
    };
    output::write_document(&Document {
        rendered,
        out: args.output.out.clone(),
    })
}

fn scheme_tag(scheme: SchemeArg) -> String {
    match scheme {
        SchemeArg::Zf => "zf",
        SchemeArg::Random => "random",
        SchemeArg::Guga => "guga",
        SchemeArg::Jpauga => "jpauga",
        SchemeArg::Brute => "brute",
        SchemeArg::Zfdp => "zfdp",
    }
    .to_string()
}

#[derive(Serialize)]
struct GroupDoc {
    n_users: usize,
    n_tx: usize,
    channel_fingerprint: String,
    snr_db: f64,
    p_t_linear: f64,
    algo: String,
    g: usize,
    grouping: Vec<Vec<usize>>,
    powers: Vec<f64>,
    water_level: f64,
    sum_rate_bpcu: f64,
    iterations: usize,
    rate_trace_bpcu: Vec<f64>,
}

pub fn cmd_group(args: &GroupArgs) -> Result<()> {
    let h = load_source(&args.channel)?;
    let p_t = db_to_linear(args.snr_db);
    check_group_size(h.n_users(), args.g)?;
    let result = match args.algo {
        GroupAlgo::Jpauga => search::jpauga(&h, p_t, args.g, args.max_itr, args.rel_threshold)?,
        GroupAlgo::Guga => search::jpauga(&h, p_t, args.g, 1, args.rel_threshold)?,
        GroupAlgo::Brute => search::brute_force_optimal(&h, p_t, args.g, args.budget)?,
        GroupAlgo::Random => {
            let grouping =
                grouping::random_grouping(h.n_users(), args.g, grouping_seed(args.channel.seed))?;
            let cache = fastpath::build_cache(&h)?;
            let (rate, pa) = search::opt_rate_for_grouping(&cache, &grouping, p_t)?;
            search::SearchResult {
                grouping,
                powers: pa,
                sum_rate: rate,
                iterations: 1,
                rate_trace: vec![rate],
            }
        }
    };
    let powers = result.powers.powers.clone();
    let doc = GroupDoc {
        n_users: h.n_users(),
        n_tx: h.n_tx(),
        channel_fingerprint: format!("{:016x}", fastpath::channel_fingerprint(&h)),
        snr_db: args.snr_db,
        p_t_linear: p_t,
        algo: match args.algo {
            GroupAlgo::Guga => "guga",
            GroupAlgo::Jpauga => "jpauga",
            GroupAlgo::Brute => "brute",
            GroupAlgo::Random => "random",
        }
        .into(),
        g: args.g,
        grouping: result.grouping.to_one_based(),
        powers,
        water_level: result.powers.water_level,
        sum_rate_bpcu: result.sum_rate,
        iterations: result.iterations,
        rate_trace_bpcu: result.rate_trace.clone(),
    };
    let rendered = match args.output.format {
        Format::Json => output::to_json(&doc)?,
        Format::Csv => {
            let mut rows: Vec<(String, String)> = vec![
                ("n_users".into(), doc.n_users.to_string()),
                ("n_tx".into(), doc.n_tx.to_string()),
                (
                    "channel_fingerprint".into(),
                    doc.channel_fingerprint.clone(),
                ),
                ("snr_db".into(), output::fmt_f64(doc.snr_db)),
                ("p_t_linear".into(), output::fmt_f64(doc.p_t_linear)),
                ("algo".into(), doc.algo.clone()),
                ("g".into(), doc.g.to_string()),
                ("grouping".into(), output::grouping_string(&doc.grouping)),
                ("powers".into(), output::join_f64(&doc.powers)),
                ("water_level".into(), output::fmt_f64(doc.water_level)),
                ("sum_rate_bpcu".into(), output::fmt_f64(doc.sum_rate_bpcu)),
                ("iterations".into(), doc.iterations.to_string()),
                (
                    "rate_trace_bpcu".into(),
                    output::join_f64(&doc.rate_trace_bpcu),
                ),
            ];
            output::key_value_csv(&mut rows)
        }
    };
    output::write_document(&Document {
        rendered,
        out: args.output.out.clone(),
    })
}

fn cli_scheme(args: &MonteCarloArgs) -> Scheme {
    match args.scheme {
        SchemeArg::Zf => Scheme::Zf,
        SchemeArg::Random => Scheme::Random,
        SchemeArg::Guga => Scheme::Jpauga {
            max_itr: 1,
            rel_threshold: args.rel_threshold,
        },
        SchemeArg::Jpauga => Scheme::Jpauga {
            max_itr: args.max_itr,
            rel_threshold: args.rel_threshold,
        },
        SchemeArg::Brute => Scheme::Brute {
            budget: args.budget,
        },
        SchemeArg::Zfdp => Scheme::ZfDp,
    }
}

pub fn cmd_montecarlo(args: &MonteCarloArgs) -> Result<()> {
    let (n_u, n_t) = (args.rayleigh[0], args.rayleigh[1]);
    if args.scheme != SchemeArg::Zf && args.scheme != SchemeArg::Zfdp {
        check_group_size(n_u, args.g)?;
    }
    let samples = analysis::rate_distribution(
        cli_scheme(args),
        n_u,
        n_t,
        db_to_linear(args.snr_db),
        args.g,
        args.trials,
        args.seed,
    )?;
    output::write_montecarlo(&samples, args.output.format, args.output.out.as_deref())
}

struct CheckList {
    lines: Vec<(String, bool, String)>,
}

impl CheckList {
    fn new() -> Self {
        Self { lines: Vec::new() }
    }

    fn record(&mut self, name: &str, pass: bool, detail: String) {
        self.lines.push((name.to_string(), pass, detail));
    }

    fn check(&mut self, name: &str, pass: bool, detail: impl FnOnce() -> String) {
        if pass {
            self.record(name, true, String::new());
        } else {
            self.record(name, false, detail());
        }
    }

    fn all_pass(&self) -> bool {
        self.lines.iter().all(|(_, p, _)| *p)
    }
}

pub fn cmd_verify(args: &VerifyArgs) -> ExitCode {
    match run_verify(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn verify_group_sizes(n_users: usize, requested: Option<usize>) -> Result<Vec<usize>> {
    match requested {
        Some(g) => {
            check_group_size(n_users, g)?;
            Ok(vec![g])
        }
        None => Ok((1..=n_users)
            .filter(|&g| n_users.is_multiple_of(g))
            .collect()),
    }
}

fn sample_groupings(n_users: usize, g: usize, budget: u128) -> Result<Vec<Grouping>> {
    let count = grouping::count_groupings(n_users, g).unwrap_or(u128::MAX);
    if count <= 200.min(budget) {
        grouping::collect_groupings(n_users, g, budget.min(200))
    } else {
        (0..50)
            .map(|t| grouping::random_grouping(n_users, g, RngSeed::new(0xbead, t)))
            .collect()
    }
}

fn run_verify(args: &VerifyArgs) -> Result<bool> {
    // Default instance: the built-in example channel.
    let h = if args.channel.channel.is_none()
        && !args.channel.builtin_hex
        && args.channel.rayleigh.is_none()
    {
        channel::builtin_hex()
    } else {
        load_source(&args.channel)?
    };
    let p_t = db_to_linear(args.snr_db);
    let n = h.n_users();
    let mut checks = CheckList::new();

    let zf = precoder::zf_sum_rate(&h, p_t)?;
    let zf_gains = powalloc::zf_gains(&h)?;
    let cache = fastpath::build_cache(&h)?;

    // Appendix-A projection identity: g = 1 effective gains equal the
    // reciprocal diagonal of (H H^H)^{-1}.
    let g1_gains = precoder::user_gains(&h, &Grouping::singletons(n))?;
    let worst_rel = g1_gains
        .iter()
        .zip(&zf_gains)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    checks.check("projection_identity_g1", worst_rel < 1e-8, || {
        format!("worst relative deviation {worst_rel:.3e}")
    });

    // Waterfilling KKT conditions on the ZF gains.
    let pa = powalloc::waterfill(&zf_gains, p_t)?;
    let mut slack_ok = true;
    for (i, &p) in pa.powers.iter().enumerate() {
        let a = 1.0 / zf_gains[i];
        if p == 0.0 {
            slack_ok &= pa.water_level <= a + 1e-9;
        } else {
            slack_ok &= (p - (pa.water_level - a)).abs() < 1e-9;
        }
    }
    let sum: f64 = pa.powers.iter().sum();
    slack_ok &= (sum - p_t).abs() <= 1e-9 * p_t;
    checks.check("waterfill_slackness", slack_ok, || {
        format!("water level {} powers {:?}", pa.water_level, pa.powers)
    });

    for &g in &verify_group_sizes(n, args.g)? {
        let label = format!("g{g}");
        let groupings = sample_groupings(n, g, args.budget)?;
        let mut qr_ok = true;
        let mut null_ok = true;
        let mut tri_ok = true;
        let mut proj_ok = true;
        let mut power_ok = true;
        let mut fast_ok = true;
        let mut dominance_ok = true;
        let mut theorem1_ok = true;
        let mut worst_margin = f64::INFINITY;
        for grouping in &groupings {
            let report = precoder::sum_rate_opt_power(&h, p_t, grouping)?;
            if g >= 2 {
                let margin = report.sum_rate - zf.sum_rate;
                worst_margin = worst_margin.min(margin);
                theorem1_ok &= margin >= -1e-9;
            }
            let gains = precoder::user_gains(&h, grouping)?;
            for (gain, zf_gain) in gains.iter().zip(&zf_gains) {
                dominance_ok &= *gain >= zf_gain - 1e-9;
            }
            let d = precoder::build_transmit_matrices(&h, grouping, &report.powers)?;
            power_ok &= {
                let total: f64 = d.iter().map(|m| m.frobenius_norm().powi(2)).sum();
                (total - p_t).abs() <= 1e-9 * p_t
            };
            null_ok &= precoder::nulling_residual(&h, grouping, &d) < 1e-10;
            for k in 0..grouping.n_groups() {
                let gp = precoder::effective_channel(&h, grouping, k)?;
                let q = gp.q();
                let ortho = q.adjoint().mul(q);
                let mut dev = 0.0f64;
                for i in 0..g {
                    for j in 0..g {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        dev = dev.max((ortho[(i, j)] - expect).norm());
                    }
                }
                qr_ok &= dev < 1e-10;
                let gk = h.rows_of(grouping.group(k));
                tri_ok &= gk.mul(q).sub(&gp.r().adjoint()).max_abs() < 1e-10;
                let p = precoder::complement_projector(&h, grouping, k)?;
                proj_ok &= p.mul(&p).sub(&p).max_abs() < 1e-10 && p.hermitian_residual() < 1e-10;
                let r_fast = fastpath::effective_r_fast(&cache, grouping.group(k))?;
                let scale = gp.r().max_abs();
                fast_ok &= r_fast.sub(gp.r()).max_abs() <= 1e-8 * scale;
            }
        }
        checks.check(&format!("qr_orthonormal_{label}"), qr_ok, String::new);
        checks.check(&format!("nulling_{label}"), null_ok, String::new);
        checks.check(&format!("triangularization_{label}"), tri_ok, String::new);
        checks.check(&format!("projector_{label}"), proj_ok, String::new);
        checks.check(&format!("power_identity_{label}"), power_ok, String::new);
        checks.check(
            &format!("fastpath_equivalence_{label}"),
            fast_ok,
            String::new,
        );
        checks.check(
            &format!("gain_dominance_{label}"),
            dominance_ok,
            String::new,
        );
        if g >= 2 {
            checks.check(&format!("theorem1_sandwich_{label}"), theorem1_ok, || {
                format!("worst margin {worst_margin:.3e}")
            });
        }
    }

    let rendered = match args.output.format {
        Format::Json => {
            #[derive(Serialize)]
            struct CheckDoc {
                name: String,
                pass: bool,
                detail: String,
            }
            let docs: Vec<CheckDoc> = checks
                .lines
                .iter()
                .map(|(name, pass, detail)| CheckDoc {
                    name: name.clone(),
                    pass: *pass,
                    detail: detail.clone(),
                })
                .collect();
            output::to_json(&docs)?
        }
        Format::Csv => {
            let mut text = String::from("check,pass,detail\n");
            for (name, pass, detail) in &checks.lines {
                text.push_str(&format!("{name},{pass},{detail}\n"));
            }
            text
        }
    };
    // Human-readable pass/fail lines go to stdout regardless of format
    // when no --out is given; with --out the document goes to the file.
    match &args.output.out {
        Some(path) => {
            std::fs::write(path, rendered)?;
            for (name, pass, detail) in &checks.lines {
                println!("{} {name} {detail}", if *pass { "PASS" } else { "FAIL" });
            }
        }
        None => print!("{rendered}"),
    }
    Ok(checks.all_pass())
}
