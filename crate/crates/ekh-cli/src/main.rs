//! Command-line front end: homology tables, equivariant tables, cobordism checks and a result cache.

mod cache;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ekh::arcalg::{braid_tangle, glue_check, GlueReport};
use ekh::chain::{homology, SCHEMA_VERSION};
use ekh::cobordism::{
    certify_equivariant_neck_cut, certify_neck_cut, equivariant_neck_cut, neck_cut, ribbon_check, EquivariantMovie,
    EquivariantMovieJson, Movie, MovieJson, NeckSpec, RibbonReport, RibbonVerdict,
};
use ekh::corpus;
use ekh::diagram::{Diagram, DiagramJson, DiskularTangle, PeriodicDiagram, PeriodicJson, QuotientJson, QuotientTangle};
use ekh::equivariant::{ekh, hhat, is_prime, DEFAULT_TRUNCATION};
use ekh::khovanov::{Convention, KhovanovComplex};

#[derive(Parser, Debug)]
#[command(name = "ekh", version, about = "Khovanov and equivariant Khovanov homology of periodic links")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Opts {
    /// Period of the symmetry; must be prime.
    #[arg(long, global = true, env = "EKH_P")]
    p: Option<usize>,
    /// Length N of the truncated resolution.
    #[arg(long, global = true, env = "EKH_TRUNCATION", default_value_t = DEFAULT_TRUNCATION)]
    truncation: usize,
    #[arg(long, global = true, env = "EKH_CONVENTION", value_enum, default_value_t = Conv::Paper)]
    convention: Conv,
    #[arg(long, global = true, env = "EKH_FORMAT", value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true, env = "EKH_JOBS")]
    #[serde(skip)]
    jobs: Option<usize>,
    /// Directory for cached results; caching is off when unset.
    #[arg(long, global = true, env = "EKH_CACHE_DIR")]
    #[serde(skip)]
    cache_dir: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long, short, global = true)]
    #[serde(skip)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Conv {
    Paper,
    Mirrored,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Khovanov homology of a diagram (JSON file or `corpus:NAME`).
    Kh {
        input: String,
        /// Also emit the chain complex: full JSON, or chain group ranks as text.
        #[arg(long)]
        complex: bool,
    },
    /// Equivariant Khovanov homology of a quotient tangle or periodic diagram.
    Ekh { input: String },
    /// Ribbon obstruction for an equivariant movie.
    Ribbon { input: String },
    /// Coefficient table of the lifted map on the interval complex.
    Hhat {
        #[arg(long, default_value_t = 2)]
        degree: usize,
    },
    /// Certifies the neck cutting relation for a movie or an equivariant movie.
    Neckcut {
        input: String,
        #[arg(long)]
        frame: usize,
        #[arg(long)]
        edge: usize,
    },
    /// Compares gluing with the arc algebra against the closed diagram.
    GlueCheck {
        /// Tangle JSON file; omit to use `--braid`.
        input: Option<String>,
        /// Braid word such as `1,1,-2`, read as a tangle with its ends on the boundary.
        #[arg(long, allow_hyphen_values = true)]
        braid: Option<String>,
        #[arg(long, default_value_t = 2)]
        strands: usize,
        /// Index of the closing matching.
        #[arg(long, default_value_t = 0)]
        matching: usize,
    },
    /// Writes the built-in corpus as JSON files.
    Corpus {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Input(String),
    NoInput(String),
    Compute(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 64,
            Failure::Input(_) => 65,
            Failure::NoInput(_) => 66,
            Failure::Compute(_) => 70,
            Failure::Io(_) => 74,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::NoInput(m) | Failure::Compute(m) | Failure::Io(m) => m,
        }
    }
}

fn compute<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Compute(e.to_string())
}

/// A rendered report with its exit status.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub output: String,
    pub exit: u8,
}

fn convention(o: &Opts) -> Convention {
    match o.convention {
        Conv::Paper => Convention::Paper,
        Conv::Mirrored => Convention::Mirrored,
    }
}

fn check_p(p: usize) -> Result<usize, Failure> {
    if is_prime(p) {
        Ok(p)
    } else {
        Err(Failure::Usage(format!("--p must be prime, got {p}")))
    }
}

fn check_truncation(o: &Opts) -> Result<usize, Failure> {
    if o.truncation == 0 {
        return Err(Failure::Usage("--truncation must be at least 1".into()));
    }
    Ok(o.truncation)
}

fn read_json(input: &str) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(input).map_err(|e| Failure::NoInput(format!("cannot read {input}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{input}: {e}")))
}

fn parse<T: for<'de> Deserialize<'de>>(input: &str, v: Value) -> Result<T, Failure> {
    serde_json::from_value(v).map_err(|e| Failure::Input(format!("{input}: {e}")))
}

fn invalid<E: std::fmt::Display>(input: &str) -> impl Fn(E) -> Failure + '_ {
    move |e| Failure::Input(format!("{input}: {e}"))
}

fn corpus_name(input: &str) -> Option<&str> {
    input.strip_prefix("corpus:")
}

fn unknown(name: &str) -> Failure {
    Failure::NoInput(format!("no corpus entry named {name}"))
}

fn load_diagram(input: &str) -> Result<Diagram, Failure> {
    if let Some(name) = corpus_name(input) {
        return corpus::diagram(name).ok_or_else(|| unknown(name));
    }
    let j: DiagramJson = parse(input, read_json(input)?)?;
    Diagram::from_json(&j).map_err(invalid(input))
}

/// A quotient tangle with a period, from either a periodic diagram (which fixes `p`) or a bare
/// quotient tangle (which needs `--p`).
fn load_periodic(input: &str, p: Option<usize>) -> Result<PeriodicDiagram, Failure> {
    let (q, own_p) = if let Some(name) = corpus_name(input) {
        let pd = corpus::periodic_diagram(name).ok_or_else(|| unknown(name))?;
        (pd.quotient, Some(pd.p))
    } else {
        let v = read_json(input)?;
        if v.get("quotient").is_some() {
            let j: PeriodicJson = parse(input, v)?;
            (QuotientTangle::from_json(&j.quotient).map_err(invalid(input))?, Some(j.p))
        } else {
            let j: QuotientJson = parse(input, v)?;
            (QuotientTangle::from_json(&j).map_err(invalid(input))?, None)
        }
    };
    let p = check_p(p.or(own_p).ok_or_else(|| Failure::Usage("--p is required for a quotient tangle".into()))?)?;
    q.lift(p).map_err(invalid(input))
}

fn load_equivariant_movie(input: &str, p: Option<usize>) -> Result<EquivariantMovie, Failure> {
    let mut m = if let Some(name) = corpus_name(input) {
        corpus::equivariant_movies().into_iter().find(|(n, _)| *n == name).map(|x| x.1).ok_or_else(|| unknown(name))?
    } else {
        let j: EquivariantMovieJson = parse(input, read_json(input)?)?;
        EquivariantMovie::from_json(&j).map_err(invalid(input))?
    };
    if let Some(p) = p {
        m.p = p;
    }
    check_p(m.p)?;
    Ok(m)
}

enum AnyMovie {
    Plain(Movie),
    Equivariant(EquivariantMovie),
}

fn load_any_movie(input: &str, p: Option<usize>) -> Result<AnyMovie, Failure> {
    if let Some(name) = corpus_name(input) {
        if let Some((_, m)) = corpus::movies().into_iter().find(|(n, _)| *n == name) {
            return Ok(AnyMovie::Plain(m));
        }
        return load_equivariant_movie(input, p).map(AnyMovie::Equivariant);
    }
    let v = read_json(input)?;
    if v.get("quotient").is_some() {
        return load_equivariant_movie(input, p).map(AnyMovie::Equivariant);
    }
    let j: MovieJson = parse(input, v)?;
    Ok(AnyMovie::Plain(Movie::from_json(&j).map_err(invalid(input))?))
}

/// A tangle in a disk with no punctures, as stored in tangle files.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct TangleJson {
    #[serde(flatten)]
    diagram: DiagramJson,
    outer: usize,
}

fn render(format: Format, j: Value, text: String) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(&j).expect("serializable") + "\n",
        Format::Text => text,
    }
}

fn sign_str(s: Option<i64>) -> String {
    match s {
        Some(1) => "+1".into(),
        Some(-1) => "-1".into(),
        Some(x) => x.to_string(),
        None => "none".into(),
    }
}

fn cmd_kh(o: &Opts, input: &str, complex: bool) -> Result<Outcome, Failure> {
    let d = load_diagram(input)?;
    let conv = convention(o);
    let kc = KhovanovComplex::new(&d, conv).map_err(compute)?;
    let table = homology(&kc.complex).map_err(compute)?;
    let mut j = table.to_json();
    j["convention"] = json!(o.convention);
    let mut text = format!("Kh, convention = {}\n{}", conv_name(o), table.to_text());
    if complex {
        j["complex"] = serde_json::to_value(kc.complex.to_json()).expect("serializable");
        text.push_str("chain groups:\n");
        for (i, q) in kc.complex.bidegrees() {
            text.push_str(&format!("  C^{{{i},{q}}} = Z^{}\n", kc.complex.dim((i, q))));
        }
    }
    Ok(Outcome { output: render(o.format, j, text), exit: 0 })
}

fn conv_name(o: &Opts) -> &'static str {
    match o.convention {
        Conv::Paper => "paper",
        Conv::Mirrored => "mirrored",
    }
}

fn cmd_ekh(o: &Opts, input: &str) -> Result<Outcome, Failure> {
    let n = check_truncation(o)?;
    let pd = load_periodic(input, o.p)?;
    let t = ekh(&pd, n, convention(o)).map_err(compute)?;
    let mut j = t.to_json();
    j["convention"] = json!(o.convention);
    Ok(Outcome { output: render(o.format, j, t.to_text()), exit: 0 })
}

fn ribbon_text(r: &RibbonReport) -> String {
    let mut s = format!("verdict: {}\np = {}, truncation N = {}\n", r.verdict, r.p, r.truncation);
    if r.verdict == RibbonVerdict::NotRibbon {
        s.push_str("the movie has a death\n");
        return s;
    }
    let _ = writeln!(s, "equivariant sign: {}", sign_str(r.sign));
    let _ = writeln!(s, "plain sign: {}", sign_str(r.plain_sign));
    if let Some(w) = r.witness_entries {
        let _ = writeln!(s, "homotopy witness: {w} nonzero entries");
    }
    s.push_str("left inverse by bidegree (k, q, rank, trusted, ok):\n");
    for b in &r.bidegrees {
        let _ = writeln!(s, "  {:>3} {:>4} {:>3} {:>5} {}", b.k, b.q, b.rank, b.trusted, b.left_inverse);
    }
    if r.extrapolated {
        s.push_str("note: the ends are not both knots\n");
    }
    s
}

fn cmd_ribbon(o: &Opts, input: &str) -> Result<Outcome, Failure> {
    let n = check_truncation(o)?;
    let m = load_equivariant_movie(input, o.p)?;
    let r = ribbon_check(&m, n, convention(o)).map_err(compute)?;
    let exit = if r.verdict == RibbonVerdict::SplitInjective { 0 } else { 2 };
    let j = serde_json::to_value(&r).expect("serializable");
    let mut j = json!({ "version": SCHEMA_VERSION, "report": j });
    j["convention"] = json!(o.convention);
    Ok(Outcome { output: render(o.format, j, ribbon_text(&r)), exit })
}

fn cmd_hhat(o: &Opts, degree: usize) -> Result<Outcome, Failure> {
    let p = check_p(o.p.unwrap_or(2))?;
    if degree == 0 {
        return Err(Failure::Usage("--degree must be at least 1".into()));
    }
    let h = hhat(p, degree).map_err(compute)?;
    let text = format!("p = {p}, degree {degree}\n{}", h.to_text());
    Ok(Outcome { output: render(o.format, h.to_json(), text), exit: 0 })
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_neckcut(o: &Opts, input: &str, frame: usize, edge: usize) -> Result<Outcome, Failure> {
    let conv = convention(o);
    let neck = NeckSpec { frame, edge };
    let (ok, j, text) = match load_any_movie(input, o.p)? {
        AnyMovie::Plain(m) => {
            let cut = neck_cut(&m, neck).map_err(compute)?;
            let c = certify_neck_cut(&m, &cut, conv).map_err(compute)?;
            let ok = c.sign.is_some();
            let text =
                format!("terms: {}\nexact: {}\nhomotopy sign: {}\n{}\n", c.terms, c.exact, sign_str(c.sign), pass(ok));
            (ok, serde_json::to_value(&c).expect("serializable"), text)
        }
        AnyMovie::Equivariant(m) => {
            let cut = equivariant_neck_cut(&m, neck).map_err(compute)?;
            let c = certify_equivariant_neck_cut(&m, &cut, conv).map_err(compute)?;
            let ok = c.sign.is_some() && c.classes.iter().all(|k| k.equivariant);
            let mut text = format!("p = {}, terms: {}\n", c.p, c.terms);
            for k in &c.classes {
                let _ = writeln!(text, "class {{{}}}: equivariant {}", k.patterns.join(", "), k.equivariant);
            }
            let _ = writeln!(
                text,
                "sum equals uncut map: {}\nhomotopy sign: {}\n{}",
                c.sum_matches,
                sign_str(c.sign),
                pass(ok)
            );
            (ok, serde_json::to_value(&c).expect("serializable"), text)
        }
    };
    let j = json!({ "version": SCHEMA_VERSION, "pass": ok, "certificate": j });
    Ok(Outcome { output: render(o.format, j, text), exit: if ok { 0 } else { 2 } })
}

fn glue_text(r: &GlueReport) -> String {
    let pairs: String = r.matching.iter().map(|(a, b)| format!("({a},{b})")).collect();
    format!(
        "n = {}, crossings = {}, matching {}\nglued:\n{}closed:\n{}{}\n",
        r.n,
        r.crossings,
        pairs,
        r.glued.to_text(),
        r.closed.to_text(),
        pass(r.agrees())
    )
}

fn parse_word(w: &str) -> Result<Vec<i32>, Failure> {
    w.split(',')
        .map(|x| x.trim().parse::<i32>().map_err(|e| Failure::Usage(format!("bad braid letter {x:?}: {e}"))))
        .collect()
}

fn cmd_glue(o: &Opts, input: Option<&str>, braid: Option<&str>, strands: usize, m: usize) -> Result<Outcome, Failure> {
    let t = match (input, braid) {
        (Some(input), None) => {
            let j: TangleJson = parse(input, read_json(input)?)?;
            let d = Diagram::from_json(&j.diagram).map_err(invalid(input))?;
            DiskularTangle::new(d, j.outer, vec![]).map_err(invalid(input))?
        }
        (None, Some(w)) => braid_tangle(strands, &parse_word(w)?).map_err(|e| Failure::Usage(e.to_string()))?,
        _ => return Err(Failure::Usage("give exactly one of a tangle file or --braid".into())),
    };
    let r = glue_check(&t, m).map_err(compute)?;
    Ok(Outcome { output: render(o.format, r.to_json(), glue_text(&r)), exit: if r.agrees() { 0 } else { 2 } })
}

fn write_file(path: &Path, v: &impl Serialize) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    let s = serde_json::to_string_pretty(v).expect("serializable") + "\n";
    std::fs::write(path, s).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn cmd_corpus(out: &Path) -> Result<Outcome, Failure> {
    let mut written = vec![];
    let mut put = |rel: String, v: Value| -> Result<(), Failure> {
        write_file(&out.join(&rel), &v)?;
        written.push(rel);
        Ok(())
    };
    for (name, d) in corpus::diagrams() {
        put(format!("diagrams/{name}.json"), serde_json::to_value(d.to_json()).expect("serializable"))?;
    }
    for (name, pd) in corpus::periodic() {
        put(format!("periodic/{name}.json"), serde_json::to_value(pd.to_json()).expect("serializable"))?;
    }
    for (name, m) in corpus::movies() {
        put(format!("movies/{name}.json"), serde_json::to_value(m.to_json()).expect("serializable"))?;
    }
    for (name, m) in corpus::equivariant_movies() {
        put(format!("movies/{name}.json"), serde_json::to_value(m.to_json()).expect("serializable"))?;
    }
    Ok(Outcome { output: written.join("\n") + "\n", exit: 0 })
}

/// Content of an input for cache keys: the file bytes, or the corpus name.
fn input_key(input: Option<&str>) -> Result<Value, Failure> {
    match input {
        None => Ok(Value::Null),
        Some(s) if corpus_name(s).is_some() => Ok(json!(s)),
        Some(s) => read_json(s),
    }
}

fn run(cli: &Cli) -> Result<Outcome, Failure> {
    let o = &cli.opts;
    if let Some(j) = o.jobs {
        if j == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        ekh::par::set_threads(j);
    }
    let (name, input, extra) = match &cli.command {
        Command::Corpus { out } => return cmd_corpus(out),
        Command::Kh { input, complex } => ("kh", Some(input.as_str()), json!(complex)),
        Command::Ekh { input } => ("ekh", Some(input.as_str()), Value::Null),
        Command::Ribbon { input } => ("ribbon", Some(input.as_str()), Value::Null),
        Command::Hhat { degree } => ("hhat", None, json!(degree)),
        Command::Neckcut { input, frame, edge } => ("neckcut", Some(input.as_str()), json!([frame, edge])),
        Command::GlueCheck { input, braid, strands, matching } => {
            ("glue-check", input.as_deref(), json!([braid, strands, matching]))
        }
    };
    let key = cache::key(&json!({
        "command": name,
        "input": input_key(input)?,
        "extra": extra,
        "opts": o,
    }));
    if let Some(dir) = &o.cache_dir {
        if let Some(hit) = cache::load(dir, &key) {
            return Ok(hit);
        }
    }
    let out = match &cli.command {
        Command::Kh { input, complex } => cmd_kh(o, input, *complex),
        Command::Ekh { input } => cmd_ekh(o, input),
        Command::Ribbon { input } => cmd_ribbon(o, input),
        Command::Hhat { degree } => cmd_hhat(o, *degree),
        Command::Neckcut { input, frame, edge } => cmd_neckcut(o, input, *frame, *edge),
        Command::GlueCheck { input, braid, strands, matching } => {
            cmd_glue(o, input.as_deref(), braid.as_deref(), *strands, *matching)
        }
        Command::Corpus { .. } => unreachable!("handled above"),
    }?;
    if let Some(dir) = &o.cache_dir {
        cache::store(dir, &key, &out).map_err(|e| Failure::Io(format!("cache: {e}")))?;
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(out) => {
            if let Some(path) = &cli.opts.output {
                if let Err(e) = std::fs::write(path, &out.output) {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::from(74);
                }
            } else {
                print!("{}", out.output);
            }
            ExitCode::from(out.exit)
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
