//! `slrkit` command-line front end. Exit codes: 0 for a positive verdict or
//! success, 1 for a negative verdict or a failed suite, 2 for errors.

use std::io::{Read, Write};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::decomposition::exact_treewidth;
use crate::generators::{cfg_to_sid, gen_twk_mso_sid, gen_twk_sid, greibach_normalize, is_greibach, word_to_structure, Cfg, MsoSidOptions, DEFAULT_TYPE_CAP};
use crate::slr::{find_derivation, normalize_sid, parse_sid, parse_slr_with, Derivation, ParseContext, Sid, SlrFormula};
use crate::slr2so::{LinkEncoding, SoChecker, TranslationContext};
use crate::so::{eval_so, mso_type, parse_so_with, quantifier_rank};
use crate::structures::{find_isomorphism, pad, Elem, Signature, Store, Structure};
use crate::suite;
use crate::unfolding::oracle_check;

#[derive(Parser, Debug)]
#[command(name = "slrkit", version, about = "Separation Logic of Relations, MSO and treewidth toolkit")]
pub struct Cli {
    /// Emit a JSON report instead of plain text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decide (structure, store) |= goal under a SID.
    CheckSlr {
        structure: String,
        sid: String,
        goal: String,
        /// Store as `x=1,y=2`.
        #[arg(long, default_value = "")]
        store: String,
    },
    /// Evaluate a second-order formula on a padded structure.
    CheckSo {
        structure: String,
        formula: String,
        /// Number of fresh padding elements; defaults to 2^rank.
        #[arg(long)]
        pad: Option<usize>,
        #[arg(long, default_value = "")]
        store: String,
    },
    /// Remove equalities between variables from a SID.
    Normalize { sid: String },
    /// Translate a goal under a SID into a second-order formula.
    TranslateSo {
        sid: String,
        goal: String,
        /// Print size statistics to standard error.
        #[arg(long)]
        emit_stats: bool,
        #[arg(long, value_enum, default_value_t = Encoding::Classes)]
        encoding: Encoding,
    },
    /// The SID Δ(k) of structures of treewidth at most k.
    GenTwk { k: usize, signature: String },
    /// The SID Δ(k, φ) for an MSO sentence φ.
    GenTwkMso {
        k: usize,
        signature: String,
        formula: String,
        /// Only discover types realised by at most this many tuples.
        #[arg(long)]
        tuple_bound: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_TYPE_CAP)]
        type_cap: usize,
    },
    /// Encode a context-free grammar as a SID.
    Cfg2sid { grammar: String },
    /// The structure encoding a non-empty word.
    Word2struct { word: String },
    /// Exact treewidth with a witness decomposition.
    Treewidth { structure: String },
    /// Isomorphism test with a witness bijection.
    Iso { left: String, right: String },
    /// Rank-r MSO type of a structure padded with 2^r elements.
    MsoType { structure: String, rank: usize },
    /// Decide a predicate atom by enumerating unfolding trees.
    OracleCheck {
        structure: String,
        sid: String,
        goal: String,
        #[arg(long, default_value = "")]
        store: String,
    },
    /// Run the acceptance criteria.
    Suite {
        /// Run a single criterion.
        #[arg(long)]
        criterion: Option<u8>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Encoding {
    Classes,
    FlowSets,
}

impl From<Encoding> for LinkEncoding {
    fn from(e: Encoding) -> Self {
        match e {
            Encoding::Classes => LinkEncoding::Classes,
            Encoding::FlowSets => LinkEncoding::FlowSets,
        }
    }
}

/// Machine-readable report of one invocation.
#[derive(Serialize, Debug)]
pub struct JsonReport {
    pub verb: String,
    pub verdict: Option<bool>,
    pub output: String,
    pub witnesses: Value,
    pub timings: Value,
}

struct Outcome {
    verdict: Option<bool>,
    output: String,
    witnesses: Value,
}

impl Outcome {
    fn text(output: String) -> Self {
        Outcome { verdict: None, output, witnesses: Value::Null }
    }

    fn exit_code(&self) -> i32 {
        match self.verdict {
            Some(false) => 1,
            _ => 0,
        }
    }
}

type CliResult<T> = Result<T, String>;

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run(argv: &[String], stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return if code == 0 { 0 } else { 2 };
        }
    };
    let verb = verb_name(&cli.command);
    let start = Instant::now();
    let mut input = Input { stdin, used: false };
    match execute(&cli.command, &mut input, stderr) {
        Ok(out) => {
            let code = out.exit_code();
            let written = if cli.json {
                let report = JsonReport {
                    verb: verb.to_string(),
                    verdict: out.verdict,
                    output: out.output,
                    witnesses: out.witnesses,
                    timings: json!({ "elapsed_ms": start.elapsed().as_secs_f64() * 1000.0 }),
                };
                writeln!(stdout, "{}", serde_json::to_string_pretty(&report).expect("serializable report"))
            } else {
                write!(stdout, "{}", out.output)
            };
            if written.is_err() {
                return 2;
            }
            code
        }
        Err(e) => {
            let _ = writeln!(stderr, "slrkit {verb}: {e}");
            2
        }
    }
}

fn verb_name(c: &Command) -> &'static str {
    match c {
        Command::CheckSlr { .. } => "check-slr",
        Command::CheckSo { .. } => "check-so",
        Command::Normalize { .. } => "normalize",
        Command::TranslateSo { .. } => "translate-so",
        Command::GenTwk { .. } => "gen-twk",
        Command::GenTwkMso { .. } => "gen-twk-mso",
        Command::Cfg2sid { .. } => "cfg2sid",
        Command::Word2struct { .. } => "word2struct",
        Command::Treewidth { .. } => "treewidth",
        Command::Iso { .. } => "iso",
        Command::MsoType { .. } => "mso-type",
        Command::OracleCheck { .. } => "oracle-check",
        Command::Suite { .. } => "suite",
    }
}

/// Standard input, readable once.
struct Input<'a> {
    stdin: &'a mut dyn Read,
    used: bool,
}

impl Input<'_> {
    /// Contents of file `path`, or of standard input for `-`.
    fn file(&mut self, path: &str) -> CliResult<String> {
        if path == "-" {
            if self.used {
                return Err("standard input can only be read once".into());
            }
            self.used = true;
            let mut s = String::new();
            self.stdin.read_to_string(&mut s).map_err(|e| format!("stdin: {e}"))?;
            Ok(s)
        } else {
            std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))
        }
    }

    /// Like [`Input::file`], but an argument naming no file is literal text.
    fn text(&mut self, arg: &str) -> CliResult<String> {
        if arg == "-" || std::path::Path::new(arg).is_file() {
            self.file(arg)
        } else {
            Ok(arg.to_string())
        }
    }

    fn structure(&mut self, path: &str) -> CliResult<Structure> {
        Structure::parse(&self.file(path)?).map_err(|e| format!("{path}: {e}"))
    }

    fn sid(&mut self, arg: &str) -> CliResult<Sid> {
        parse_sid(&self.text(arg)?).map_err(|e| format!("SID: {e}"))
    }
}

fn parse_goal(text: &str, sid: &Sid, sig: &Signature) -> CliResult<SlrFormula> {
    parse_slr_with(text, &ParseContext::new().with_sid(sid).with_signature(sig)).map_err(|e| format!("goal: {e}"))
}

/// Parses `x=1,y=2`.
pub fn parse_store(text: &str) -> CliResult<Store> {
    let mut store = Store::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (x, v) = part.split_once('=').ok_or_else(|| format!("store entry `{part}` is not `name=id`"))?;
        let v: Elem = v.trim().parse().map_err(|_| format!("store entry `{part}` has no numeric id"))?;
        store.set(x.trim(), v);
    }
    Ok(store)
}

/// Parses `E/2,V/1,c`: relations with arities and bare constant names.
pub fn parse_signature(text: &str) -> CliResult<Signature> {
    let mut sig = Signature::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('/') {
            Some((r, a)) => {
                let a: usize = a.parse().map_err(|_| format!("bad arity in `{part}`"))?;
                sig.add_relation(r, a).map_err(|e| e.to_string())?;
            }
            None => sig.add_constant(part).map_err(|e| e.to_string())?,
        }
    }
    Ok(sig)
}

fn verdict(v: bool, witnesses: Value) -> Outcome {
    Outcome { verdict: Some(v), output: format!("{v}\n"), witnesses }
}

fn derivation_json(d: &Derivation) -> Value {
    json!({
        "head": d.head,
        "rule": d.rule,
        "args": d.args,
        "tuples": d.tuples,
        "children": d.children.iter().map(derivation_json).collect::<Vec<_>>(),
    })
}

fn execute(cmd: &Command, input: &mut Input, stderr: &mut dyn Write) -> CliResult<Outcome> {
    let e = |e: &dyn std::fmt::Display| e.to_string();
    match cmd {
        Command::CheckSlr { structure, sid, goal, store } => {
            let s = input.structure(structure)?;
            let sid = input.sid(sid)?;
            let phi = parse_goal(goal, &sid, s.signature())?;
            let d = find_derivation(&s, &parse_store(store)?, &phi, &sid).map_err(|x| e(&x))?;
            Ok(verdict(d.is_some(), d.as_ref().map(derivation_json).unwrap_or(Value::Null)))
        }
        Command::CheckSo { structure, formula, pad: m, store } => {
            let s = input.structure(structure)?;
            let store = parse_store(store)?;
            let free: Vec<&str> = store.first_order.keys().map(String::as_str).collect();
            let f = parse_so_with(&input.text(formula)?, &free).map_err(|x| e(&x))?;
            let m = m.unwrap_or(1 << quantifier_rank(&f).min(16));
            let domain = pad(&s, m).domain;
            let v = eval_so(&s, &domain, &store, &f).map_err(|x| e(&x))?;
            Ok(verdict(v, json!({ "domain": domain })))
        }
        Command::Normalize { sid } => Ok(Outcome::text(normalize_sid(&input.sid(sid)?).sid.to_string())),
        Command::TranslateSo { sid, goal, emit_stats, encoding } => {
            let sid = input.sid(sid)?;
            let phi = parse_goal(goal, &sid, &Signature::new())?;
            let so = SoChecker::new(&Signature::new(), &phi, &sid, (*encoding).into()).map_err(|x| e(&x))?;
            let stats = stats_json(so.context(), so.formula());
            if *emit_stats {
                writeln!(stderr, "{stats}").map_err(|x| e(&x))?;
            }
            Ok(Outcome { verdict: None, output: format!("{}\n", so.formula()), witnesses: json!({ "stats": stats }) })
        }
        Command::GenTwk { k, signature } => {
            let sid = gen_twk_sid(*k, &parse_signature(signature)?).map_err(|x| e(&x))?;
            Ok(Outcome::text(sid.to_string()))
        }
        Command::GenTwkMso { k, signature, formula, tuple_bound, type_cap } => {
            let f = parse_so_with(&input.text(formula)?, &[]).map_err(|x| e(&x))?;
            let opts = MsoSidOptions { type_cap: *type_cap, tuple_bound: *tuple_bound };
            let sid = gen_twk_mso_sid(*k, &parse_signature(signature)?, &f, opts).map_err(|x| e(&x))?;
            Ok(Outcome::text(sid.to_string()))
        }
        Command::Cfg2sid { grammar } => {
            let g = Cfg::parse(&input.text(grammar)?).map_err(|x| e(&x))?;
            let g = if is_greibach(&g) { g } else { greibach_normalize(&g).map_err(|x| e(&x))? };
            Ok(Outcome::text(cfg_to_sid(&g).map_err(|x| e(&x))?.to_string()))
        }
        Command::Word2struct { word } => Ok(Outcome::text(word_to_structure(word).map_err(|x| e(&x))?.to_string())),
        Command::Treewidth { structure } => {
            let s = input.structure(structure)?;
            let (w, td) = exact_treewidth(&s).map_err(|x| e(&x))?;
            Ok(Outcome { verdict: None, output: format!("{w}\n{td}"), witnesses: json!({ "width": w, "decomposition": td.to_string() }) })
        }
        Command::Iso { left, right } => {
            let a = input.structure(left)?;
            let b = input.structure(right)?;
            let map = find_isomorphism(&a, &b).map_err(|x| e(&x))?;
            let mut out = Outcome { verdict: Some(map.is_some()), output: format!("{}\n", map.is_some()), witnesses: json!(map) };
            if let Some(m) = &map {
                for (x, y) in m {
                    out.output.push_str(&format!("{x} -> {y}\n"));
                }
            }
            Ok(out)
        }
        Command::MsoType { structure, rank } => {
            let s = input.structure(structure)?;
            let t = mso_type(&s, &pad(&s, 1 << rank.min(&16)).domain, *rank).map_err(|x| e(&x))?;
            Ok(Outcome::text(format!("{t}\n")))
        }
        Command::OracleCheck { structure, sid, goal, store } => {
            let s = input.structure(structure)?;
            let sid = input.sid(sid)?;
            let SlrFormula::Pred(p, args) = parse_goal(goal, &sid, s.signature())? else {
                return Err("the oracle decides predicate atoms only".into());
            };
            let v = oracle_check(&s, &parse_store(store)?, &p, &args, &sid).map_err(|x| e(&x))?;
            Ok(verdict(v, Value::Null))
        }
        Command::Suite { criterion } => {
            let reports = match criterion {
                Some(id) => vec![suite::run_criterion(*id).ok_or_else(|| format!("no criterion {id}; expected 1 to 10"))?],
                None => suite::run_all(),
            };
            let passed = reports.iter().all(|r| r.passed);
            let output: String = reports.iter().map(|r| format!("{r}\n")).collect();
            Ok(Outcome { verdict: Some(passed), output, witnesses: json!(reports) })
        }
    }
}

fn stats_json(ctx: &TranslationContext, f: &crate::so::SoFormula) -> Value {
    let s = ctx.stats(f);
    json!({ "rules": s.rules, "max_children": s.max_children, "relations": s.relations, "so_variables": s.so_variables, "size": s.size })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str], stdin: &str) -> (i32, String, String) {
        let argv: Vec<String> = std::iter::once("slrkit").chain(args.iter().copied()).map(String::from).collect();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(&argv, &mut stdin.as_bytes(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn stores_and_signatures() {
        let s = parse_store("x=1, y = 2").unwrap();
        assert_eq!((s.get("x"), s.get("y")), (Some(1), Some(2)));
        assert!(parse_store("x").is_err());
        let sig = parse_signature("E/2,V/1,c").unwrap();
        assert_eq!(sig.arity("E"), Some(2));
        assert!(sig.has_constant("c"));
        assert!(parse_signature("E/x").is_err());
    }

    #[test]
    fn word_then_check_through_stdin() {
        let (code, word, _) = call(&["word2struct", "ab"], "");
        assert_eq!(code, 0);
        let (code, out, _) = call(&["check-slr", "-", suite::RING_SID, "emp"], &word);
        assert_eq!((code, out.as_str()), (1, "false\n"));
    }

    #[test]
    fn usage_and_input_errors() {
        assert_eq!(call(&["treewidth"], "").0, 2);
        assert_eq!(call(&["frobnicate"], "").0, 2);
        let (code, _, err) = call(&["treewidth", "/nonexistent/file"], "");
        assert_eq!(code, 2);
        assert!(err.starts_with("slrkit treewidth:"), "{err}");
        assert_eq!(call(&["--help"], "").0, 0);
    }

    #[test]
    fn json_report() {
        let (code, out, _) = call(&["--json", "treewidth", "-"], "rel E 2\ntuple E 1 2\ntuple E 2 3\ntuple E 3 1\n");
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["verb"], "treewidth");
        assert_eq!(v["witnesses"]["width"], 2);
        assert!(v["timings"]["elapsed_ms"].is_number());
    }
}
