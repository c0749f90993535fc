//! The three subcommands: `run-scenario`, `trace`, and `simulate`.

use std::path::{Path, PathBuf};

use bms_core::{
    alt_fairness_measure, build_gamma_quadrature, conditional_pure_relativity_means,
    debias_priori, level_law, mixed_level_moments,
    pfos, pno, poi, ppos, pure_relativity_view, scheme_metrics, simulate_many, DescentTrace,
    IndividualizedScheme, LevelLaw, MixedLevelMoments, Portfolio, PremiumSchedule, QuadratureRule,
    SharedScheme, TransitionRule,
};

use crate::config::{ScenarioConfig, SchemeKind};
use crate::report::{
    self, ClassRow, ComparedEstimate, DescentSummary, LevelRow, MetricsRow, Report, SchemeReport,
    SimReport, SimSchemeReport,
};
use crate::CliError;

pub struct CommonArgs {
    pub config_path: PathBuf,
    pub out: Option<PathBuf>,
    pub quadrature_nodes: Option<usize>,
    pub seed: Option<u64>,
}

/// Everything derived once from a loaded config.
struct Prepared {
    name: String,
    config: ScenarioConfig,
    portfolio: Portfolio,
    rule: TransitionRule,
    nodes: usize,
    moments: MixedLevelMoments,
    law: LevelLaw,
    out_dir: PathBuf,
}

fn prepare(args: &CommonArgs) -> Result<Prepared, CliError> {
    let config = ScenarioConfig::load(&args.config_path)?;
    let portfolio = config.portfolio()?;
    let rule = config.transition_rule()?;
    if rule.saturates_immediately() {
        eprintln!(
            "warning: penalty {} exceeds levels-1 ({}); any claim saturates at the top level",
            rule.penalty(),
            rule.levels() - 1
        );
    }
    let nodes = args.quadrature_nodes.unwrap_or(config.quadrature_nodes);
    let quadrature: QuadratureRule = build_gamma_quadrature(portfolio.residual(), nodes)?;
    let moments = mixed_level_moments(&portfolio, &rule, &quadrature)?;
    let law = level_law(&moments, &portfolio);
    let out_dir = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    let name = config.display_name(&args.config_path);
    Ok(Prepared { name, config, portfolio, rule, nodes, moments, law, out_dir })
}

/// A computed scheme of either table layout.
enum Built {
    Shared(SharedScheme),
    Individualized(IndividualizedScheme),
}

impl Built {
    fn schedule(&self) -> &dyn PremiumSchedule {
        match self {
            Built::Shared(s) => s,
            Built::Individualized(s) => s,
        }
    }

    fn xi(&self) -> Vec<f64> {
        match self {
            Built::Shared(s) => s.xi().to_vec(),
            Built::Individualized(s) => s.xi().to_vec(),
        }
    }

    fn gamma_rows(&self) -> Vec<Vec<f64>> {
        match self {
            Built::Shared(s) => vec![s.gamma().to_vec()],
            Built::Individualized(s) => s.gamma().to_vec(),
        }
    }

    fn is_individualized(&self) -> bool {
        matches!(self, Built::Individualized(_))
    }
}

struct Computed {
    kind: SchemeKind,
    scheme: Built,
    trace: Option<DescentTrace>,
}

fn build_schemes(p: &Prepared) -> Result<Vec<Computed>, CliError> {
    let mut out = Vec::new();
    for kind in p.config.ordered_schemes() {
        let (scheme, trace) = match kind {
            SchemeKind::Pno => (Built::Shared(pno(&p.portfolio, p.rule.levels())), None),
            SchemeKind::Ppos => (Built::Shared(ppos(&p.moments, &p.portfolio)?), None),
            SchemeKind::Pfos => {
                let (scheme, trace) = pfos(&p.moments, &p.portfolio, &p.config.pfos_options())?;
                (Built::Shared(scheme), Some(trace))
            }
            SchemeKind::Poi => (Built::Individualized(poi(&p.moments, &p.portfolio)?), None),
            SchemeKind::Debias => {
                let shared = ppos(&p.moments, &p.portfolio)?;
                let debiased = debias_priori(shared.gamma(), &p.portfolio, &p.moments)?;
                (Built::Shared(debiased), None)
            }
        };
        out.push(Computed { kind, scheme, trace });
    }
    Ok(out)
}

pub fn run_scenario(args: &CommonArgs) -> Result<(), CliError> {
    let p = prepare(args)?;
    let computed = build_schemes(&p)?;
    let classes = p.portfolio.class_count();
    let levels = p.rule.levels();

    let mut level_rows = Vec::new();
    let mut class_rows = Vec::new();
    let mut metric_rows = Vec::new();
    let mut scheme_reports = Vec::new();
    for item in &computed {
        let name = item.kind.name();
        let gamma_rows = item.scheme.gamma_rows();
        if item.scheme.is_individualized() {
            for (class, row) in gamma_rows.iter().enumerate() {
                level_rows.push(LevelRow {
                    table: format!("gamma_{name}"),
                    risk_group: (class + 1).to_string(),
                    values: row.clone(),
                });
            }
        } else {
            level_rows.push(LevelRow {
                table: format!("gamma_{name}"),
                risk_group: String::new(),
                values: gamma_rows[0].clone(),
            });
        }
        class_rows.push(ClassRow { table: format!("xi_{name}"), values: item.scheme.xi() });

        let metrics = scheme_metrics(item.scheme.schedule(), &p.moments, &p.portfolio);
        metric_rows.push(MetricsRow {
            method: name.to_string(),
            metrics: metrics.clone(),
            in_delta_chain: item.kind != SchemeKind::Debias,
        });
        scheme_reports.push(SchemeReport {
            name: name.to_string(),
            individualized: item.scheme.is_individualized(),
            xi: item.scheme.xi(),
            gamma: gamma_rows,
            metrics,
            descent: item.trace.as_ref().map(|t| DescentSummary {
                cycles: t.cycles,
                converged: t.converged,
                anchor_level: t.anchor_level,
                q: t.q,
            }),
        });

        // The fully optimized scheme doubles as an individualized table of
        // pure relativities; report that view alongside it.
        if item.kind == SchemeKind::Pfos {
            if let Built::Shared(shared) = &item.scheme {
                let view = pure_relativity_view(shared, &p.portfolio);
                for (class, row) in view.gamma().iter().enumerate() {
                    level_rows.push(LevelRow {
                        table: "gamma_pfos_pure".into(),
                        risk_group: (class + 1).to_string(),
                        values: row.clone(),
                    });
                }
                class_rows.push(ClassRow { table: "xi_pfos_pure".into(), values: view.xi().to_vec() });
                let metrics = scheme_metrics(&view, &p.moments, &p.portfolio);
                metric_rows.push(MetricsRow {
                    method: "pfos_pure".into(),
                    metrics: metrics.clone(),
                    in_delta_chain: false,
                });
                scheme_reports.push(SchemeReport {
                    name: "pfos_pure".into(),
                    individualized: true,
                    xi: view.xi().to_vec(),
                    gamma: view.gamma().to_vec(),
                    metrics,
                    descent: None,
                });
            }
        }
    }
    level_rows.push(LevelRow {
        table: "level_law".into(),
        risk_group: String::new(),
        values: p.law.marginal().to_vec(),
    });

    let report = Report {
        name: p.name.clone(),
        notes: p.config.notes.clone(),
        portfolio: report::PortfolioEcho {
            classes: p
                .portfolio
                .classes()
                .iter()
                .map(|c| report::ClassEcho { lambda: c.rate, weight: c.weight })
                .collect(),
            psi: p.portfolio.residual().dispersion(),
        },
        rule: report::RuleEcho { levels, penalty: p.rule.penalty() },
        quadrature_nodes: p.nodes,
        level_law: p.law.marginal().to_vec(),
        per_class_level_law: (1..=classes).map(|k| p.law.conditional(k).to_vec()).collect(),
        alt_fairness: if classes >= 2 {
            Some(alt_fairness_measure(&p.moments, &p.portfolio)?)
        } else {
            None
        },
        schemes: scheme_reports,
    };

    write_out(&p.out_dir, "relativities.csv", &report::relativities_csv(levels, &level_rows))?;
    write_out(&p.out_dir, "priori.csv", &report::priori_csv(classes, &class_rows))?;
    write_out(
        &p.out_dir,
        "metrics.md",
        &report::metrics_markdown(&p.name, p.config.notes.as_deref(), classes, &metric_rows),
    )?;
    write_out(&p.out_dir, "report.json", &report::to_json_string(&report)?)?;

    for row in &metric_rows {
        println!(
            "{:<10} FIX {:.4}  HMSE {:.4}",
            row.method,
            row.metrics.fix.display_value(),
            row.metrics.hmse
        );
    }
    println!("reports written to {}", p.out_dir.display());
    Ok(())
}

pub fn trace(args: &CommonArgs) -> Result<(), CliError> {
    let p = prepare(args)?;
    if !p.config.schemes.contains(&SchemeKind::Pfos) {
        return Err(CliError::Config(
            "schemes: the trace command needs \"pfos\" in the scheme list".into(),
        ));
    }
    let (_, trace) = pfos(&p.moments, &p.portfolio, &p.config.pfos_options())?;
    write_out(&p.out_dir, "trace.csv", &report::trace_csv(&trace))?;
    println!(
        "descent converged after {} cycles ({} half-steps); trace written to {}",
        trace.cycles,
        trace.steps.len(),
        p.out_dir.display()
    );
    Ok(())
}

pub fn simulate(args: &CommonArgs) -> Result<(), CliError> {
    let p = prepare(args)?;
    let sim_config = p.config.sim_config(args.seed)?;
    let computed = build_schemes(&p)?;

    let schedules: Vec<&dyn PremiumSchedule> =
        computed.iter().map(|c| c.scheme.schedule()).collect();
    let results = simulate_many(&p.portfolio, &p.rule, &schedules, &sim_config)?;

    let classes = p.portfolio.class_count();
    let first = &results[0];
    let level_law_cmp: Vec<ComparedEstimate> = first
        .level_law
        .iter()
        .zip(p.law.marginal())
        .map(|(&e, &a)| ComparedEstimate::new(e, a))
        .collect();
    let per_class_cmp: Vec<Vec<ComparedEstimate>> = (1..=classes)
        .map(|k| {
            first.per_class_level_law[k - 1]
                .iter()
                .zip(p.law.conditional(k))
                .map(|(&e, &a)| ComparedEstimate::new(e, a))
                .collect()
        })
        .collect();

    let mut scheme_reports = Vec::new();
    for (item, result) in computed.iter().zip(&results) {
        let analytic = scheme_metrics(item.scheme.schedule(), &p.moments, &p.portfolio);
        let analytic_pure =
            conditional_pure_relativity_means(item.scheme.schedule(), &p.moments, &p.portfolio);
        scheme_reports.push(SimSchemeReport {
            name: item.kind.name().to_string(),
            mean_pure_relativity_by_class: result
                .mean_pure_relativity_by_class
                .iter()
                .zip(&analytic_pure)
                .map(|(&e, &a)| ComparedEstimate::new(e, a))
                .collect(),
            fix: ComparedEstimate::new(result.fix, analytic.fix.display_value()),
            hmse: ComparedEstimate::new(result.hmse, analytic.hmse),
        });
    }

    let sim_report = SimReport {
        name: p.name.clone(),
        seed: sim_config.seed,
        policyholders: sim_config.policyholders,
        burn_in_years: sim_config.burn_in_years,
        sample_years: sim_config.sample_years,
        class_counts: first.class_counts.clone(),
        level_law: level_law_cmp,
        per_class_level_law: per_class_cmp,
        schemes: scheme_reports,
    };
    write_out(&p.out_dir, "sim-report.json", &report::to_json_string(&sim_report)?)?;

    let worst_z = sim_report
        .level_law
        .iter()
        .filter_map(|c| c.z)
        .fold(0.0f64, |acc, z| acc.max(z.abs()));
    println!(
        "simulated {} policyholders over {} sampled years (seed {}); worst level-law |z| = {:.2}",
        sim_config.policyholders, sim_config.sample_years, sim_config.seed, worst_z
    );
    println!("sim report written to {}", p.out_dir.display());
    Ok(())
}

fn write_out(dir: &Path, file: &str, contents: &str) -> Result<(), CliError> {
    report::write_file(&dir.join(file), contents)
}
