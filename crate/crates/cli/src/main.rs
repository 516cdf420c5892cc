mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use rewind_core::lstm::ModelSpec;
use rewind_core::manifest::{Manifest, ProfileRef};
use rewind_core::perf::HwProfile;
use rewind_core::{reference, Error};
use serde::Serialize;

use config::{pick, Cli, Command, FileConfig, Format};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_DATA: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible(_) => EXIT_INFEASIBLE,
            Error::InvalidArgument(_)
            | Error::InvalidReuse(_)
            | Error::TooFewInferences { .. }
            | Error::InvalidFormat { .. } => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

/// Settings shared by every command, as embedded in reports.
#[derive(Debug, Clone, Serialize)]
pub struct Common {
    pub command: &'static str,
    pub manifest: String,
    pub profile: String,
    pub seed: u64,
    pub format: Format,
}

pub struct Ctx {
    pub common: Common,
    pub manifest: Manifest,
    pub model: ModelSpec,
    pub profile: HwProfile,
    pub out_dir: PathBuf,
    pub file: FileConfig,
}

impl Ctx {
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| {
            CliError::data(format!("cannot create {}: {e}", self.out_dir.display()))
        })?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<String, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.write(name, text.as_bytes())?;
        Ok(text)
    }

    /// Print the report in the requested format.
    pub fn emit(&self, json: &str, csv: &[u8]) {
        match self.common.format {
            Format::Json => print!("{json}"),
            Format::Csv => print!("{}", String::from_utf8_lossy(csv)),
        }
    }
}

fn load_manifest(spec: &str) -> Result<Manifest, CliError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        let model = reference::builtin(name).ok_or_else(|| {
            CliError::usage(format!(
                "unknown built-in model `{name}` (known: small, nominal)"
            ))
        })?;
        let mut m = Manifest::from_model(&model, Some(name), false);
        let profile = if name == "small" {
            HwProfile::zynq7045()
        } else {
            HwProfile::u250()
        };
        m.profile = Some(ProfileRef::Name(profile.name));
        return Ok(m);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read manifest {spec}: {e}")))?;
    Manifest::from_json(&text).map_err(|e| CliError::data(format!("{spec}: {e}")))
}

fn load_profile(spec: &str) -> Result<HwProfile, CliError> {
    if let Some(p) = HwProfile::builtin(spec) {
        return Ok(p);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CliError::usage(format!(
            "unknown profile `{spec}` (built-ins: {}; or a JSON file)",
            HwProfile::builtin_names().join(", ")
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read profile {spec}: {e}")))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let p: HwProfile = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::data(format!("{spec}: at `{}`: {}", e.path(), e.inner())))?;
    p.validate()?;
    Ok(p)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    let file = match &g.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(j) = g.jobs.or(file.jobs) {
        if j == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    let manifest_src = pick(
        g.manifest,
        file.manifest.clone(),
        "builtin:small".to_string(),
    );
    let manifest = load_manifest(&manifest_src)?;
    let model = manifest
        .to_model()
        .map_err(|e| CliError::data(format!("{manifest_src}: {e}")))?;
    let (profile, profile_src) = match g.profile.or(file.profile.clone()) {
        Some(p) => (load_profile(&p)?, p),
        None => match &manifest.profile {
            Some(r) => {
                let p = r
                    .resolve()
                    .map_err(|e| CliError::data(format!("{manifest_src}: profile: {e}")))?;
                let src = p.name.clone();
                (p, src)
            }
            None => (HwProfile::zynq7045(), HwProfile::zynq7045().name),
        },
    };
    let command = match &cli.command {
        Command::Estimate(_) => "estimate",
        Command::Explore(_) => "explore",
        Command::Simulate(_) => "simulate",
        Command::Infer(_) => "infer",
        Command::Bench(_) => "bench",
    };
    let ctx = Ctx {
        common: Common {
            command,
            manifest: manifest_src,
            profile: profile_src,
            seed: pick(g.seed, file.seed, 42),
            format: pick(g.format, file.format, Format::Json),
        },
        out_dir: pick(g.out_dir, file.out_dir.clone(), PathBuf::from("out")),
        manifest,
        model,
        profile,
        file,
    };
    match cli.command {
        Command::Estimate(a) => commands::estimate(&ctx, &a),
        Command::Explore(a) => commands::explore(&ctx, &a),
        Command::Simulate(a) => commands::simulate(&ctx, &a),
        Command::Infer(a) => commands::infer(&ctx, &a),
        Command::Bench(a) => commands::bench(&ctx, &a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
