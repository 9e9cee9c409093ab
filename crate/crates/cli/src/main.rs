use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use qcwidth::coset::{build_neighborhood, check_quasiconvexity, geodesic_core};
use qcwidth::intersections::{
    conjugate_handle, conjugate_intersection_generators, fiber_product_intersection, is_intersection_infinite,
    same_subgroup,
};
use qcwidth::invariants::{self, MalnormalityVerdict};
use qcwidth::oracle::{cross_check, oracle_intersection};
use qcwidth::{Budget, Error, Finiteness, Group, GroupConfig, Letter, Limits, Mode, Subgroup, SubgroupConfig, Word};

#[derive(Parser)]
#[command(name = "qcwidth", version, about = "Width, height and intersections of quasiconvex subgroups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Membership of --word (or --g) in H, with a witness
    Member,
    /// The geodesic core of H and the quasiconvexity check
    Core,
    /// The coset-graph ball N_R(H·1), R = --radius or K
    Neighborhood,
    /// Generators and finiteness of H ∩ g⁻¹Hg
    Intersect,
    /// Whether H is finite
    Finite,
    /// Weak width of H
    Weakwidth,
    /// Width of H
    Width,
    /// Height of H
    Height,
    /// Almost-malnormality and a bounded malnormality search
    Malnormal,
    /// Constants and radii used by the algorithms
    Constants,
    /// Compare the engines with brute-force oracles
    OracleCheck,
}

#[derive(Args)]
struct Opts {
    /// Group configuration (JSON)
    #[arg(long, global = true)]
    group: Option<PathBuf>,
    /// Subgroup configuration (JSON)
    #[arg(long, global = true)]
    subgroup: Option<PathBuf>,
    /// Conjugator word
    #[arg(long, global = true, allow_hyphen_values = true)]
    g: Option<String>,
    /// Word to test for membership
    #[arg(long, global = true, allow_hyphen_values = true)]
    word: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Exact)]
    mode: ModeArg,
    #[arg(long, global = true)]
    radius_cap: Option<usize>,
    #[arg(long, global = true)]
    depth_cap: Option<usize>,
    #[arg(long, global = true)]
    max_gen_length: Option<usize>,
    #[arg(long, global = true)]
    candidate_radius_cap: Option<usize>,
    /// Radius for neighborhood, malnormal, intersect --oracle and oracle-check
    #[arg(long, global = true)]
    radius: Option<usize>,
    /// Cross-check intersect against the oracles
    #[arg(long, global = true)]
    oracle: bool,
    /// Write the JSON report here as well as to stdout
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum ModeArg {
    Paper,
    Exact,
}

enum Status {
    Definitive,
    Bounded,
    Mismatch,
}

type Outcome = Result<(Value, Status), Error>;

fn read(path: &Option<PathBuf>, flag: &str) -> Result<String, Error> {
    let path = path.as_ref().ok_or_else(|| Error::InvalidConfig(format!("--{flag} is required")))?;
    std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn budget(opts: &Opts) -> Result<Budget, Error> {
    let mut b = Budget::default();
    for (v, slot, name) in [
        (opts.radius_cap, &mut b.radius_cap, "--radius-cap"),
        (opts.depth_cap, &mut b.depth_cap, "--depth-cap"),
        (opts.max_gen_length, &mut b.max_gen_length, "--max-gen-length"),
        (opts.candidate_radius_cap, &mut b.candidate_radius_cap, "--candidate-radius-cap"),
    ] {
        if let Some(v) = v {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
            *slot = v;
        }
    }
    Ok(b)
}

fn load_group(opts: &Opts, b: &Budget) -> Result<Arc<Group>, Error> {
    let group = GroupConfig::from_json(&read(&opts.group, "group")?)?.build()?;
    let limits = Limits { radius_cap: b.radius_cap, element_cap: b.element_cap };
    Ok(Arc::new(group.with_limits(limits)))
}

fn load_subgroup(opts: &Opts, group: &Arc<Group>, b: Budget) -> Result<Subgroup, Error> {
    Ok(SubgroupConfig::from_json(&read(&opts.subgroup, "subgroup")?)?.build(group.clone())?.with_budget(b))
}

fn conjugator(opts: &Opts, group: &Group) -> Result<Word, Error> {
    let g = opts.g.as_ref().ok_or_else(|| Error::InvalidConfig("--g is required".into()))?;
    group.parse(g)
}

fn status(bounded: bool) -> Status {
    if bounded {
        Status::Bounded
    } else {
        Status::Definitive
    }
}

fn fmt_list(group: &Group, ws: &[Word]) -> Vec<String> {
    ws.iter().map(|w| group.format(w)).collect()
}

fn random_word(rng: &mut ChaCha8Rng, rank: usize, max_len: usize) -> Word {
    let len = rng.gen_range(0..=max_len);
    let mut letters: Vec<Letter> = Vec::with_capacity(len);
    while letters.len() < len {
        let x = Letter::new(rng.gen_range(0..rank), rng.gen_bool(0.5));
        if letters.last() != Some(&x.inverse()) {
            letters.push(x);
        }
    }
    Word::from_letters(letters)
}

fn run(command: Command, opts: &Opts) -> Outcome {
    let b = budget(opts)?;
    let group = load_group(opts, &b)?;
    let h = load_subgroup(opts, &group, b)?;
    let mode = match opts.mode {
        ModeArg::Paper => Mode::PaperGreedy,
        ModeArg::Exact => Mode::ExactSearch,
    };
    let name = |c: Command| -> &'static str {
        match c {
            Command::Member => "member",
            Command::Core => "core",
            Command::Neighborhood => "neighborhood",
            Command::Intersect => "intersect",
            Command::Finite => "finite",
            Command::Weakwidth => "weakwidth",
            Command::Width => "width",
            Command::Height => "height",
            Command::Malnormal => "malnormal",
            Command::Constants => "constants",
            Command::OracleCheck => "oracle-check",
        }
    };
    let (mut report, st) = match command {
        Command::Member => {
            let text = opts.word.as_ref().or(opts.g.as_ref()).ok_or_else(|| Error::InvalidConfig("--word is required".into()))?;
            let w = group.parse(text)?;
            let m = h.membership(&w)?;
            let bounded = m.is_bounded();
            (
                json!({
                    "word": group.format(&w),
                    "verdict": m.verdict.as_str(),
                    "witness": m.witness.as_ref().map(|f| fmt_list(&group, &h.witness_factors(f))),
                    "bound": m.bound,
                }),
                status(bounded),
            )
        }
        Command::Core => {
            let core = geodesic_core(&h)?;
            let (ok, qb) = check_quasiconvexity(&h, &core)?;
            let bounded = core.bounded || qb;
            (
                json!({
                    "states": core.state_count(),
                    "edges": core.edge_count(),
                    "depth": core.depth(),
                    "reps": fmt_list(&group, &core.reps),
                    "K": h.k(),
                    "quasiconvex_within_K": ok,
                    "bounded": bounded,
                }),
                status(bounded),
            )
        }
        Command::Neighborhood => {
            let radius = opts.radius.unwrap_or(h.k());
            let nb = build_neighborhood(&h, radius)?;
            (
                json!({
                    "radius": radius,
                    "vertices": nb.vertex_count(),
                    "reps": fmt_list(&group, &nb.reps),
                    "bounded": nb.bounded,
                }),
                status(nb.bounded),
            )
        }
        Command::Intersect => intersect(&h, &conjugator(opts, &group)?, opts)?,
        Command::Finite => {
            let (order, bounded) = h.finiteness()?;
            (json!({ "finite": order.is_some(), "order": order, "bounded": bounded }), status(bounded))
        }
        Command::Weakwidth => {
            let mut r = invariants::weak_width(&h)?;
            r.mode = mode;
            (r.to_json(&group), status(r.bounded))
        }
        Command::Width | Command::Height => {
            let r = invariants::width(&h, mode)?;
            (r.to_json(&group), status(r.bounded))
        }
        Command::Malnormal => {
            let (almost, bounded) = invariants::almost_malnormal(&h)?;
            let radius = opts.radius.unwrap_or(2 * h.k() + group.delta().times(8) + 2);
            let semi = match invariants::malnormality_semidecision(&h, radius)? {
                MalnormalityVerdict::MalnormalUpToBudget { radius } => {
                    json!({ "verdict": "malnormal_up_to_budget", "radius": radius })
                }
                MalnormalityVerdict::NotMalnormal { witness, element } => json!({
                    "verdict": "not_malnormal",
                    "radius": radius,
                    "witness": group.format(&witness),
                    "element": element.map(|e| group.format(&e)),
                }),
            };
            (json!({ "almost_malnormal": almost, "semidecision": semi, "bounded": bounded }), status(bounded))
        }
        Command::Constants => {
            let g = match &opts.g {
                Some(text) => group.parse(text)?,
                None => Word::empty(),
            };
            let mut r = invariants::constants_report(&h, &g)?.to_json();
            r["g"] = json!(group.format(&g));
            (r, Status::Definitive)
        }
        Command::OracleCheck => {
            let radius = opts.radius.unwrap_or(3);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let extra: Vec<Word> = (0..20).map(|_| random_word(&mut rng, group.alphabet().rank(), radius + 2)).collect();
            let conj: Vec<Word> = match &opts.g {
                Some(_) => vec![conjugator(opts, &group)?],
                None => group.letters().map(Word::letter).collect(),
            };
            let r = cross_check(&h, radius, radius.saturating_sub(1).max(1), b.depth_cap, &extra, &conj)?;
            let count = |c: &qcwidth::oracle::CheckCount| json!({ "checks": c.checks, "disagreements": c.disagreements });
            let st = if r.total_disagreements() > 0 { Status::Mismatch } else { status(r.bounded) };
            (
                json!({
                    "radius": radius,
                    "seed": opts.seed,
                    "membership": count(&r.membership),
                    "cosets": count(&r.cosets),
                    "double_cosets": count(&r.double_cosets),
                    "intersections": count(&r.intersections),
                    "mismatches": r.mismatches,
                    "bounded": r.bounded,
                }),
                st,
            )
        }
    };
    report["command"] = json!(name(command));
    Ok((report, st))
}

fn intersect(h: &Subgroup, g: &Word, opts: &Opts) -> Outcome {
    let group = h.group();
    let r = conjugate_intersection_generators(h, g)?;
    let (fin, fb) = is_intersection_infinite(h, g)?;
    let mut bounded = r.bounded || fb || fin == Finiteness::FiniteBounded;
    let mut report = json!({
        "g": group.format(g),
        "generating_set": fmt_list(group, &r.generating_set),
        "elements_found": r.elements.len(),
        "M": r.m,
        "length_bound": r.length_bound.map(|b| b.to_string()),
        "swept_length": r.swept_length,
        "theoretical_bound_swept": r.theoretical_bound_swept,
        "finiteness": fin.label(),
        "order": match fin { Finiteness::Finite(n) => Some(n), _ => None },
    });
    let mut complete = r.theoretical_bound_swept && !r.bounded;
    if h.is_exact() {
        let fp = fiber_product_intersection(h, &conjugate_handle(h, g)?)?;
        let equal = same_subgroup(h, &r.generating_set, &fp.generating_set)?;
        report["fiber_product"] = json!({
            "generating_set": fmt_list(group, &fp.generating_set),
            "basis": fp.basis.as_ref().map(|b| fmt_list(group, b)),
            "rank": fp.rank,
            "finiteness": fp.finiteness.map(|f| f.label()),
            "equals_enumeration": equal,
        });
        complete |= equal;
    }
    report["generating_set_complete"] = json!(complete);
    bounded |= !complete;
    let mut st = status(bounded);
    if opts.oracle {
        let radius = opts.radius.unwrap_or(4);
        let o = oracle_intersection(h, g, radius, h.budget().depth_cap)?;
        let ge = group.evaluate(g)?;
        let ginv = group.inverse(&ge)?;
        let (ball, _) = h.subgroup_ball(radius)?;
        let mut fast = Vec::new();
        for (s, w) in ball {
            if h.contains(&group.multiply(&group.multiply(&ge, &s)?, &ginv)?)?.0 {
                fast.push(w);
            }
        }
        let oracle_words: Vec<Word> = o.elements.iter().map(|(_, w)| w.clone()).collect();
        let infinite_agree = o.has_infinite_order_element(group)? == fin.is_infinite();
        let agree = fast == oracle_words && infinite_agree;
        report["oracle"] = json!({
            "radius": radius,
            "elements": oracle_words.len(),
            "stable": o.stable,
            "agree": agree,
        });
        if !agree {
            st = Status::Mismatch;
        }
    }
    report["bounded"] = json!(bounded);
    Ok((report, st))
}

fn write_report(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command, &cli.opts) {
        Ok((report, st)) => {
            let text = serde_json::to_string_pretty(&report).expect("json") + "\n";
            print!("{text}");
            if let Some(path) = &cli.opts.report {
                if let Err(e) = write_report(path, &text) {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            }
            match st {
                Status::Definitive => ExitCode::SUCCESS,
                Status::Bounded => ExitCode::from(2),
                Status::Mismatch => {
                    eprintln!("error: oracle disagreement");
                    ExitCode::from(1)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
