//! Command-line front end: build families and check their well-formedness,
//! run lemma checks and the brute-force sensitivity oracle, and verify
//! programs by enumerating structure choices.
//!
//! Exit codes: 0 all checks pass, 1 a property is violated (with a witness
//! in the report), 2 bad input, 3 a resource cap was exceeded. Reports are
//! plain JSON and byte-identical across runs with the same seed and config.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use udts::classes::ClassContext;
use udts::interp::witness_replay;
use udts::semantics::WellformedReport;
use udts::*;

const EXIT_OK: u8 = 0;
const EXIT_VIOLATION: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_CAP: u8 = 3;

#[derive(Parser)]
#[command(name = "udts", version, about = "Underspecified data-type semantics toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Number of distinct byte values
    #[arg(long, default_value_t = 4)]
    radix: u32,
    /// Memory size in cells
    #[arg(long, default_value_t = 8)]
    mem: usize,
    /// Enumeration cap (modifications, pre-states, choice products)
    #[arg(long, default_value_t = 1 << 24)]
    cap: u128,
    /// Address window for lemma checks and builtin families
    #[arg(long, default_value_t = 1)]
    addr_bound: usize,
    /// Maximum representations concatenated into one slice
    #[arg(long, default_value_t = 2)]
    slice_bound: usize,
    /// Seed for seeded constructions
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout
    #[arg(long, value_name = "OUT")]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build or load a family and report member well-formedness
    Family {
        #[command(flatten)]
        common: Common,
        /// Builtin family name (gcc-bool, bool-01, bool-pairs, uint2,
        /// plain-closure, addr-scramble, protected)
        #[arg(long, value_name = "NAME")]
        builtin: Option<String>,
        /// Family description file
        #[arg(long, value_name = "FILE", conflicts_with = "builtin")]
        file: Option<PathBuf>,
    },
    /// Run lemma checks and/or the brute-force sensitivity oracle
    Sensitivity {
        #[command(flatten)]
        common: Common,
        /// Family under check: builtin name or description file path
        #[arg(long, value_name = "NAME|FILE")]
        family: String,
        /// Foreign family for implicit-cast checks (default: uint2)
        #[arg(long, value_name = "NAME|FILE")]
        foreign: Option<String>,
        /// Lemma to check (1-4); repeatable
        #[arg(long, value_name = "N")]
        lemma: Vec<u8>,
        /// Modification class for the oracle (1-5); repeatable
        #[arg(long, value_name = "N")]
        class: Vec<u8>,
    },
    /// Verify a program against every admissible structure choice
    Verify {
        #[command(flatten)]
        common: Common,
        /// Program file ({"decls": [...], "stmts": [...]})
        #[arg(long, value_name = "FILE")]
        program: Option<PathBuf>,
        /// Family description files providing the program's types
        #[arg(long, value_name = "FILE")]
        family: Vec<PathBuf>,
        /// Use the built-in kernel scheduler scenario
        #[arg(long)]
        case_study: bool,
        /// Use the erroneous message copy in the case study
        #[arg(long, requires = "case_study")]
        buggy: bool,
        /// Give the case-study TCB type a plain family
        #[arg(long, requires = "case_study")]
        plain_tcb: bool,
        /// Re-execute the witness embedded in an earlier report
        #[arg(long, value_name = "FILE")]
        replay: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Family { common, builtin, file } => cmd_family(&common, builtin, file),
        Command::Sensitivity { common, family, foreign, lemma, class } => {
            cmd_sensitivity(&common, &family, foreign.as_deref(), &lemma, &class)
        }
        Command::Verify { common, program, family, case_study, buggy, plain_tcb, replay } => {
            cmd_verify(&common, program, &family, case_study, buggy, plain_tcb, replay)
        }
    };
    match code {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[derive(Debug)]
struct CliError {
    message: String,
    cap: bool,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError { message: message.into(), cap: false }
    }

    fn exit_code(&self) -> u8 {
        if self.cap {
            EXIT_CAP
        } else {
            EXIT_INPUT
        }
    }
}

macro_rules! cap_aware {
    ($ty:ty) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                let message = e.to_string();
                let cap = message.contains("cap is") || message.contains("bound is");
                CliError { message, cap }
            }
        }
    };
}

cap_aware!(udts::SemanticsError);
cap_aware!(udts::sensitivity::SensitivityError);
cap_aware!(udts::classes::GenError);
cap_aware!(udts::interp::InterpError);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<udts::family::FamilyFileError> for CliError {
    fn from(e: udts::family::FamilyFileError) -> Self {
        CliError::input(e.to_string())
    }
}

fn emit(common: &Common, report: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report)?;
    match &common.json {
        Some(path) => std::fs::write(path, format!("{text}\n"))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn workers() -> usize {
    std::env::var("UDTS_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|w| *w > 0)
        .unwrap_or(1)
}

fn builtin_family(name: &str, common: &Common) -> Result<StructureFamily, CliError> {
    let space = ByteSpace::new(common.radix)
        .map_err(|e| CliError::input(e.to_string()))?;
    let addrs: BTreeSet<Addr> = (0..common.addr_bound.max(1)).collect();
    let two_addrs: BTreeSet<Addr> = (0..common.addr_bound.max(2)).collect();
    let family = match name {
        "gcc-bool" => gcc_bool_family(space, addrs),
        "bool-01" => {
            let member = make_bool_pair(space, addrs, ByteValue(1), ByteValue(0))?;
            StructureFamily::new("bool", vec![member])
                .map_err(|e| CliError::input(e.to_string()))?
        }
        "bool-pairs" => bool_pair_family(space, addrs)?,
        "uint2" => uint2_family(space, addrs),
        "plain-closure" => {
            let base = make_bool_pair(space, addrs, ByteValue(1), ByteValue(0))?;
            permutation_closure("bool", &base, common.cap)?
        }
        "addr-scramble" => {
            let base = make_bool_pair(space, two_addrs, ByteValue(1), ByteValue(0))?;
            make_address_family("bool", &base, common.seed, 4)?
        }
        "protected" => {
            let values: BTreeSet<Value> =
                [Value::new("x"), Value::new("y")].into_iter().collect();
            let target = BitAddress::new(
                common.mem.saturating_sub(1),
                space.bits_per_byte() - 1,
            );
            let bits: BTreeSet<BitAddress> = [target].into_iter().collect();
            make_protected_family("tcb", space, &values, &two_addrs, &bits)?
        }
        other => return Err(CliError::input(format!("unknown builtin family {other:?}"))),
    };
    Ok(family)
}

fn load_family(spec: &str, common: &Common) -> Result<StructureFamily, CliError> {
    if Path::new(spec).exists() {
        let text = std::fs::read_to_string(spec)?;
        let file: FamilyFile = serde_json::from_str(&text)?;
        Ok(file.to_family()?)
    } else {
        builtin_family(spec, common)
    }
}

fn cmd_family(
    common: &Common,
    builtin: Option<String>,
    file: Option<PathBuf>,
) -> Result<u8, CliError> {
    let (source, family) = match (&builtin, &file) {
        (Some(name), None) => (name.clone(), builtin_family(name, common)?),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            let parsed: FamilyFile = serde_json::from_str(&text)?;
            (path.display().to_string(), parsed.to_family()?)
        }
        _ => return Err(CliError::input("pass exactly one of --builtin or --file")),
    };
    let reports: Vec<WellformedReport> = family.check_all();
    let ok = reports.iter().all(|r| r.ok());
    let report = json!({
        "command": "family",
        "source": source,
        "type": family.type_name(),
        "members": family.members().len(),
        "wellformed": reports,
        "ok": ok,
    });
    emit(common, &report)?;
    Ok(if ok { EXIT_OK } else { EXIT_VIOLATION })
}

fn cmd_sensitivity(
    common: &Common,
    family_spec: &str,
    foreign_spec: Option<&str>,
    lemmas: &[u8],
    classes: &[u8],
) -> Result<u8, CliError> {
    if lemmas.is_empty() && classes.is_empty() {
        return Err(CliError::input("request at least one --lemma or --class"));
    }
    let family = load_family(family_spec, common)?;
    if family.members().is_empty() {
        return Err(CliError::input("family has no members"));
    }
    let needs_foreign = lemmas.contains(&3)
        || classes.iter().any(|c| *c == 3 || *c == 4);
    let foreign = if needs_foreign || foreign_spec.is_some() {
        Some(load_family(foreign_spec.unwrap_or("uint2"), common)?)
    } else {
        None
    };

    let reader = family.members()[0].clone();
    let read_address = *reader
        .addresses()
        .iter()
        .next()
        .ok_or_else(|| CliError::input("reader has no addresses"))?;
    let ctx = ClassContext::new(
        reader,
        family.type_name().to_string(),
        read_address,
        foreign.clone().into_iter().collect(),
    );
    let addr_bound = common.addr_bound.max(1);

    let mut checks = Vec::new();
    let mut ok = true;
    for lemma in lemmas {
        let report = match lemma {
            1 => check_lemma1(&family, addr_bound)?,
            2 => check_lemma2(&family, addr_bound)?,
            3 => check_lemma3(
                &family,
                foreign.as_ref().expect("foreign loaded for lemma 3"),
                addr_bound,
                None,
            )?,
            4 => check_lemma4(&family, addr_bound)?,
            other => return Err(CliError::input(format!("no lemma {other}"))),
        };
        ok &= report.holds;
        checks.push(json!({"kind": "lemma", "lemma": lemma, "report": report}));
    }
    for class in classes {
        let class = ErrorClassId::new(*class)
            .ok_or_else(|| CliError::input(format!("no class {class}")))?;
        let mods = gen_modifications(
            class,
            &ctx,
            &GenLimits { enum_cap: common.cap, slice_parts: common.slice_bound },
        )?;
        let verdict =
            sensitive_for_modifications(std::slice::from_ref(&family), &mods, &ctx, common.cap)?;
        ok &= verdict.is_sensitive();
        checks.push(json!({"kind": "class", "class": class, "verdict": verdict}));
    }

    let mut families = vec![FamilyFile::from_family(&family)];
    if let Some(f) = &foreign {
        families.push(FamilyFile::from_family(f));
    }
    let report = json!({
        "command": "sensitivity",
        "config": {
            "radix": common.radix,
            "mem": common.mem,
            "cap": common.cap.to_string(),
            "addr_bound": addr_bound,
            "slice_bound": common.slice_bound,
            "seed": common.seed,
            "family": family_spec,
        },
        "checks": checks,
        "families": families,
        "ok": ok,
    });
    emit(common, &report)?;
    Ok(if ok { EXIT_OK } else { EXIT_VIOLATION })
}

#[derive(Serialize, Deserialize)]
struct VerifyReport {
    command: String,
    verdict: Verdict,
    program: Program,
    families: Vec<FamilyFile>,
    memory: Memory,
    bytecopy_steps: Vec<usize>,
    ok: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ReplayFile {
    Verify(Box<VerifyReport>),
    Sensitivity {
        checks: Vec<serde_json::Value>,
        families: Vec<FamilyFile>,
    },
}

fn run_verify(
    common: &Common,
    program: Program,
    families: Vec<StructureFamily>,
    m0: Memory,
) -> Result<u8, CliError> {
    let verdict = verify_with_workers(&program, &families, &m0, common.cap, workers())?;
    let ok = verdict.is_verified();
    let bytecopy_steps: Vec<usize> = program
        .stmts
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, Statement::Bytecopy { .. }))
        .map(|(i, _)| i)
        .collect();
    let report = VerifyReport {
        command: "verify".to_string(),
        verdict,
        program,
        families: families.iter().map(FamilyFile::from_family).collect(),
        memory: m0,
        bytecopy_steps,
        ok,
    };
    emit(common, &serde_json::to_value(&report)?)?;
    Ok(if ok { EXIT_OK } else { EXIT_VIOLATION })
}

fn cmd_verify(
    common: &Common,
    program: Option<PathBuf>,
    family_files: &[PathBuf],
    case_study: bool,
    buggy: bool,
    plain_tcb: bool,
    replay: Option<PathBuf>,
) -> Result<u8, CliError> {
    if let Some(path) = replay {
        let text = std::fs::read_to_string(&path)?;
        let parsed: ReplayFile = serde_json::from_str(&text)?;
        return match parsed {
            ReplayFile::Verify(report) => {
                let families: Result<Vec<StructureFamily>, _> =
                    report.families.iter().map(|f| f.to_family()).collect();
                run_verify(common, report.program, families?, report.memory)
            }
            ReplayFile::Sensitivity { checks, families } => {
                let families: Vec<StructureFamily> = families
                    .iter()
                    .map(|f| f.to_family())
                    .collect::<Result<_, _>>()?;
                let witness = checks
                    .iter()
                    .filter_map(|c| c.get("verdict"))
                    .filter_map(|v| v.get("witness"))
                    .next()
                    .ok_or_else(|| CliError::input("report embeds no witness"))?;
                let witness: SensitivityWitness =
                    serde_json::from_value(witness.clone())?;
                let space = families
                    .first()
                    .and_then(|f| f.members().first())
                    .map(|m| m.space())
                    .ok_or_else(|| CliError::input("report has no families"))?;
                let (program, m0) = witness_replay(&witness, &families, space)?;
                run_verify(common, program, families, m0)
            }
        };
    }

    if case_study {
        let families = udts::case_study::case_study_families(plain_tcb);
        let m0 = udts::case_study::case_study_memory();
        let program = udts::case_study::build_case_study(buggy);
        return run_verify(common, program, families, m0);
    }

    let path = program.ok_or_else(|| {
        CliError::input("pass --program FILE, --case-study, or --replay FILE")
    })?;
    let text = std::fs::read_to_string(&path)?;
    let program: Program = serde_json::from_str(&text)?;
    let mut families = Vec::new();
    for f in family_files {
        let text = std::fs::read_to_string(f)?;
        let parsed: FamilyFile = serde_json::from_str(&text)?;
        families.push(parsed.to_family()?);
    }
    let space = ByteSpace::new(common.radix)
        .map_err(|e| CliError::input(e.to_string()))?;
    let m0 = Memory::unknown(space, common.mem);
    run_verify(common, program, families, m0)
}
