//! Built-in kernel implementations for the process backend.
//!
//! The CLI binary doubles as the kernel runner: resolved plans invoke it as
//! `starling kernel <name> --flag value ...` inside the task's working
//! directory. Keeping the tools in-binary avoids any dependence on what the
//! host happens to have installed.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::distributions::Alphanumeric;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn flag_map(args: &[String]) -> Result<Vec<(String, String)>> {
    if !args.len().is_multiple_of(2) {
        bail!("kernel arguments must be --flag value pairs");
    }
    let mut out = Vec::new();
    for pair in args.chunks(2) {
        let flag = pair[0]
            .strip_prefix("--")
            .with_context(|| format!("expected a --flag, got `{}`", pair[0]))?;
        out.push((flag.to_string(), pair[1].clone()));
    }
    Ok(out)
}

fn get<'a>(flags: &'a [(String, String)], name: &str) -> Option<&'a str> {
    flags.iter().find(|(f, _)| f == name).map(|(_, v)| v.as_str())
}

fn require<'a>(flags: &'a [(String, String)], kernel: &str, name: &str) -> Result<&'a str> {
    get(flags, name).with_context(|| format!("kernel {kernel}: missing --{name}"))
}

/// `mkfile`: writes `size` pseudo-random alphanumeric characters to `out`.
/// Content is a pure function of the seed, so reruns are byte-identical.
fn mkfile(flags: &[(String, String)]) -> Result<()> {
    let size: usize = require(flags, "mkfile", "size")?.parse().context("--size")?;
    let seed: u64 = get(flags, "seed").unwrap_or("0").parse().context("--seed")?;
    let out = require(flags, "mkfile", "out")?;
    let rng = ChaCha8Rng::seed_from_u64(seed);
    let content: Vec<u8> = rng.sample_iter(&Alphanumeric).take(size).collect();
    let mut file = fs::File::create(out).with_context(|| format!("create {out}"))?;
    file.write_all(&content)?;
    Ok(())
}

/// `ccount`: prints the character count of `file` to stdout.
fn ccount(flags: &[(String, String)]) -> Result<()> {
    let path = require(flags, "ccount", "file")?;
    let content = fs::read(path).with_context(|| format!("read {path}"))?;
    println!("{}", content.len());
    Ok(())
}

/// `sleep`: blocks for `duration` seconds.
fn sleep(flags: &[(String, String)]) -> Result<()> {
    let duration: f64 = require(flags, "sleep", "duration")?.parse().context("--duration")?;
    if duration > 0.0 {
        std::thread::sleep(std::time::Duration::from_secs_f64(duration));
    }
    Ok(())
}

/// `flaky`: fails the first `fails` attempts, then succeeds. Attempts are
/// counted through marker files in the task's working directory, which
/// persists across retries.
fn flaky(flags: &[(String, String)]) -> Result<()> {
    let fails: u32 = require(flags, "flaky", "fails")?.parse().context("--fails")?;
    let mut attempt = 1;
    while Path::new(&format!(".attempt-{attempt}")).exists() {
        attempt += 1;
    }
    fs::File::create(format!(".attempt-{attempt}"))?;
    if attempt <= fails {
        bail!("flaky kernel failing attempt {attempt} of {fails}");
    }
    Ok(())
}

/// Entry point for the hidden `kernel` subcommand. Returns the exit status.
pub fn run(name: &str, args: &[String]) -> Result<()> {
    let flags = flag_map(args)?;
    match name {
        "mkfile" => mkfile(&flags),
        "ccount" => ccount(&flags),
        "sleep" => sleep(&flags),
        "flaky" => flaky(&flags),
        other => bail!("unknown kernel `{other}`"),
    }
}
