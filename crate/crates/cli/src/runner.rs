//! Parallel execution of independent scenarios.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::commands::{run_command, Command, Context, Report};
use crate::config::ScenarioConfig;
use crate::error::CliError;

/// Outcome of one `--config` entry.
#[derive(Debug)]
pub enum ScenarioResult {
    Ran(Report),
    /// The config could not be loaded.
    Rejected { path: PathBuf, error: CliError },
}

impl ScenarioResult {
    pub fn exit_code(&self, strict: bool) -> i32 {
        match self {
            ScenarioResult::Ran(r) => r.exit_code(strict),
            ScenarioResult::Rejected { error, .. } => error.exit_code(),
        }
    }
}

/// Output directory `base/<name>/<command>`; `base` defaults to the config's
/// `out_dir`, then to `out`.
pub fn scenario_dir(out: Option<&Path>, cfg: &ScenarioConfig, cmd: Command) -> PathBuf {
    let base = out.map(Path::to_path_buf).or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    base.join(&cfg.name).join(cmd.name())
}

fn run_one(cmd: Command, path: &Path, out: Option<&Path>, ctx: &Context) -> ScenarioResult {
    match ScenarioConfig::load(path) {
        Ok((cfg, hash)) => ScenarioResult::Ran(run_command(cmd, &cfg, &hash, &scenario_dir(out, &cfg, cmd), ctx)),
        Err(error) => ScenarioResult::Rejected { path: path.to_path_buf(), error },
    }
}

/// Run every config with at most `jobs` scenarios at once; results keep the
/// order of `configs`.
pub fn run_scenarios(
    cmd: Command,
    configs: &[PathBuf],
    out: Option<&Path>,
    jobs: usize,
    ctx: &Context,
) -> Vec<ScenarioResult> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<ScenarioResult>>> = configs.iter().map(|_| Mutex::new(None)).collect();
    let workers = jobs.clamp(1, configs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = configs.get(i) else { break };
                let r = run_one(cmd, path, out, ctx);
                *slots[i].lock().expect("result slot poisoned") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot poisoned").expect("every scenario ran"))
        .collect()
}

/// Text block for one scenario result.
pub fn render(result: &ScenarioResult) -> String {
    let mut s = String::new();
    match result {
        ScenarioResult::Ran(r) => {
            s.push_str(&format!("== {} [{}] -> {}\n", r.scenario, r.command.name(), r.out_dir.display()));
            for l in &r.lines {
                s.push_str(l);
                s.push('\n');
            }
            for c in &r.checks {
                s.push_str(&c.to_string());
                s.push('\n');
            }
            if let Some(e) = &r.error {
                s.push_str(&format!("error: {e}\n"));
            }
        }
        ScenarioResult::Rejected { path, error } => {
            s.push_str(&format!("== {}\nerror: {error}\n", path.display()));
        }
    }
    s
}

/// Highest exit code among the results.
pub fn combined_exit_code(results: &[ScenarioResult], strict: bool) -> i32 {
    results.iter().map(|r| r.exit_code(strict)).max().unwrap_or(0)
}
