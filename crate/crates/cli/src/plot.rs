//! Gnuplot script emission for result directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use weakkam::GridField;

#[derive(Default)]
struct Inventory {
    /// `tag -> (u_plus, u_minus)` binary files.
    fields: BTreeMap<String, (Option<PathBuf>, Option<PathBuf>)>,
    calibrated: BTreeMap<String, PathBuf>,
    barrier: Option<PathBuf>,
}

fn scan(dir: &Path) -> anyhow::Result<Inventory> {
    let mut inv = Inventory::default();
    let entries = fs::read_dir(dir).with_context(|| format!("cannot read {}", dir.display()))?;
    for e in entries {
        let path = e?.path();
        let Some(name) = path.file_name().and_then(|s| s.to_str()).map(str::to_string) else {
            continue;
        };
        if let Some(tag) = name.strip_prefix("u_plus_").and_then(|s| s.strip_suffix(".wkf")) {
            inv.fields.entry(tag.to_string()).or_default().0 = Some(path);
        } else if let Some(tag) = name.strip_prefix("u_minus_").and_then(|s| s.strip_suffix(".wkf")) {
            inv.fields.entry(tag.to_string()).or_default().1 = Some(path);
        } else if let Some(tag) = name
            .strip_prefix("calibrated_")
            .and_then(|s| s.strip_suffix(".csv"))
            .filter(|t| t.parse::<f64>().is_ok())
        {
            inv.calibrated.insert(tag.to_string(), path);
        } else if name == "barrier.wkf" {
            inv.barrier = Some(path);
        }
    }
    Ok(inv)
}

fn read_field(path: &Path) -> anyhow::Result<GridField> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    GridField::read_binary(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

/// `n x n` matrix, one row per second-axis index.
fn write_matrix(path: &Path, field: &GridField) -> anyhow::Result<()> {
    let grid = field.grid();
    let n = grid.n();
    let mut w = BufWriter::new(File::create(path)?);
    for j in 0..n {
        let row: Vec<String> = (0..n)
            .map(|i| format!("{}", field.get(grid.flat_index([i, j]))))
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

fn ordered_tags<'a>(tags: impl Iterator<Item = &'a String>) -> Vec<&'a String> {
    let mut v: Vec<&String> = tags.collect();
    // largest discount first
    v.sort_by(|a, b| {
        let (x, y) = (a.parse::<f64>().unwrap_or(0.0), b.parse::<f64>().unwrap_or(0.0));
        y.total_cmp(&x)
    });
    v
}

/// Writes `plot.gp` and its `.dat` files into `dir`; returns the script path.
pub fn emit(dir: &Path) -> anyhow::Result<PathBuf> {
    if !dir.is_dir() {
        bail!("result directory {} does not exist", dir.display());
    }
    let inv = scan(dir)?;
    if inv.fields.is_empty() && inv.barrier.is_none() && inv.calibrated.is_empty() {
        bail!("no result files (u_plus_*.wkf, u_minus_*.wkf, calibrated_*.csv, barrier.wkf) in {}", dir.display());
    }
    let mut script = String::from("# gnuplot script; run from this directory\nset terminal pngcairo size 900,600\nset key outside\n");
    let mut dim = None;

    let tags = ordered_tags(inv.fields.keys());
    let mut overlays = Vec::new();
    for tag in &tags {
        let (plus, minus) = &inv.fields[*tag];
        let plus = plus.as_deref().map(read_field).transpose()?;
        let minus = minus.as_deref().map(read_field).transpose()?;
        let Some(reference) = minus.as_ref().or(plus.as_ref()) else { continue };
        let grid = *reference.grid();
        dim = Some(grid.dim());
        if grid.dim() == 1 {
            let name = format!("fields_{tag}.dat");
            let mut w = BufWriter::new(File::create(dir.join(&name))?);
            writeln!(w, "# x u_plus u_minus")?;
            for i in 0..grid.len() {
                let x = grid.node_point(i).coords()[0];
                let up = plus.as_ref().map_or(f64::NAN, |f| f.get(i));
                let um = minus.as_ref().map_or(f64::NAN, |f| f.get(i));
                writeln!(w, "{x} {up} {um}")?;
            }
            overlays.push((tag.to_string(), name));
        } else {
            for (label, f) in [("u_plus", &plus), ("u_minus", &minus)] {
                if let Some(f) = f {
                    let name = format!("heatmap_{label}_{tag}.dat");
                    write_matrix(&dir.join(&name), f)?;
                    let _ = writeln!(
                        script,
                        "set output 'heatmap_{label}_{tag}.png'\nset title '{label}, lambda = {tag}'\nplot '{name}' matrix with image notitle"
                    );
                }
            }
        }
    }
    if !overlays.is_empty() {
        script.push_str("set output 'fields.png'\nset title 'u_lambda^+ (dashed) and u_lambda^- (solid)'\nset xlabel 'x'\nplot ");
        let parts: Vec<String> = overlays
            .iter()
            .enumerate()
            .flat_map(|(k, (tag, name))| {
                [
                    format!("'{name}' using 1:3 with lines lc {k} title 'u- {tag}'"),
                    format!("'{name}' using 1:2 with lines lc {k} dt 2 title 'u+ {tag}'"),
                ]
            })
            .collect();
        script.push_str(&parts.join(", \\\n     "));
        script.push('\n');
    }

    if let Some(path) = &inv.barrier {
        let b = read_field(path)?;
        let grid = *b.grid();
        dim = Some(grid.dim());
        if grid.dim() == 1 {
            let mut w = BufWriter::new(File::create(dir.join("barrier.dat"))?);
            writeln!(w, "# x h")?;
            for i in 0..grid.len() {
                writeln!(w, "{} {}", grid.node_point(i).coords()[0], b.get(i))?;
            }
            script.push_str("set output 'barrier.png'\nset title 'Peierls barrier'\nset xlabel 'x'\nplot 'barrier.dat' using 1:2 with lines title 'h'\n");
        } else {
            write_matrix(&dir.join("heatmap_barrier.dat"), &b)?;
            script.push_str("set output 'barrier.png'\nset title 'Peierls barrier'\nplot 'heatmap_barrier.dat' matrix with image notitle\n");
        }
    }

    if !inv.calibrated.is_empty() {
        let mut w = BufWriter::new(File::create(dir.join("calibrated.dat"))?);
        let mut cols = 1;
        for tag in ordered_tags(inv.calibrated.keys()) {
            let text = fs::read_to_string(&inv.calibrated[tag])?;
            let mut lines = text.lines();
            let header = lines.next().unwrap_or_default();
            cols = header.split(',').count().saturating_sub(2).max(1);
            for line in lines.filter(|l| !l.trim().is_empty()) {
                let coords: Vec<&str> = line.split(',').take(cols).collect();
                writeln!(w, "{tag} {}", coords.join(" "))?;
            }
        }
        dim.get_or_insert(cols);
        if cols == 1 {
            script.push_str("set output 'calibrated.png'\nset title 'G_lambda across the schedule'\nset logscale x\nset xlabel 'lambda'\nset ylabel 'x'\nplot 'calibrated.dat' using 1:2 with points pt 7 notitle\nunset logscale x\n");
        } else {
            script.push_str("set output 'calibrated.png'\nset title 'G_lambda across the schedule'\nset xlabel 'x'\nset ylabel 'y'\nplot 'calibrated.dat' using 2:3:1 with points pt 7 palette notitle\n");
        }
    }
    let path = dir.join("plot.gp");
    fs::write(&path, script)?;
    Ok(path)
}
