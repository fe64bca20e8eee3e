use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chordkit::annotate::{load_annotation, Annotation, FrameGrid};
use chordkit::features::{load_features, FeatureMatrix};
use chordkit::metrics::TimedPath;
use chordkit::{ChordId, Vocabulary};
use serde::Serialize;

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a, T: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: Option<u64>,
    pub config: &'a T,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

pub fn write_manifest<T: Serialize>(
    dir: &Path,
    command: &str,
    seed: Option<u64>,
    config: &T,
    inputs: &[&Path],
    outputs: &[String],
) -> Result<()> {
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.to_vec(),
    };
    write_text(
        &dir.join("run.json"),
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn vocabulary(size: usize) -> Result<Vocabulary> {
    Ok(Vocabulary::with_size(size)?)
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned())
}

/// Files in `dir` with the given extension, sorted by name.
pub fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == ext))
        .collect();
    files.sort();
    Ok(files)
}

pub struct SongFiles {
    pub name: String,
    pub annotation: Annotation,
    pub features: FeatureMatrix,
    pub beats: Option<PathBuf>,
}

/// Every `<name>.lab` in `dir` with its `<name>.cqtf`.
pub fn load_dataset(dir: &Path) -> Result<Vec<SongFiles>> {
    let labs = files_with_ext(dir, "lab")?;
    if labs.is_empty() {
        bail!("no .lab files in {}", dir.display());
    }
    labs.into_iter()
        .map(|lab| {
            let name = stem(&lab);
            let feat_path = lab.with_extension("cqtf");
            let annotation = load_annotation(&lab).with_context(|| format!("reading {}", lab.display()))?;
            let features = load_features(&feat_path).with_context(|| format!("reading {}", feat_path.display()))?;
            let beats = Some(lab.with_extension("beats")).filter(|p| p.exists());
            Ok(SongFiles {
                name,
                annotation,
                features,
                beats,
            })
        })
        .collect()
}

/// Reference/estimate annotation pairs from two files or two directories
/// (matched by file name).
pub fn annotation_pairs(reference: &Path, estimate: &Path) -> Result<Vec<(String, Annotation, Annotation)>> {
    let load = |p: &Path| load_annotation(p).with_context(|| format!("reading {}", p.display()));
    if reference.is_dir() {
        let refs = files_with_ext(reference, "lab")?;
        if refs.is_empty() {
            bail!("no .lab files in {}", reference.display());
        }
        refs.iter()
            .map(|r| {
                let e = estimate.join(r.file_name().expect("file"));
                if !e.exists() {
                    bail!("no estimate for {}", r.display());
                }
                Ok((stem(r), load(r)?, load(&e)?))
            })
            .collect()
    } else {
        Ok(vec![(stem(reference), load(reference)?, load(estimate)?)])
    }
}

/// Class at each frame center of `grid`; N where the path has no interval.
pub fn sample_path(path: &TimedPath, grid: &FrameGrid, vocab: &Vocabulary) -> Vec<ChordId> {
    let ivs = path.intervals();
    let mut j = 0;
    (0..grid.n_frames)
        .map(|i| {
            let t = grid.center(i);
            while j < ivs.len() && ivs[j].1 <= t {
                j += 1;
            }
            match ivs.get(j) {
                Some(&(s, _, id)) if s <= t => id,
                _ => vocab.no_chord(),
            }
        })
        .collect()
}

pub fn write_posteriors(
    path: &Path,
    intervals: &[(f64, f64)],
    probs: &ndarray::Array2<f64>,
    vocab: &Vocabulary,
) -> Result<()> {
    let mut out = String::from("start,end");
    for id in vocab.ids() {
        out.push(',');
        out.push_str(&vocab.name(id));
    }
    out.push('\n');
    for (&(s, e), row) in intervals.iter().zip(probs.rows()) {
        out.push_str(&format!("{s},{e}"));
        for p in row {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

pub struct Posteriors {
    pub intervals: Vec<(f64, f64)>,
    pub probs: ndarray::Array2<f64>,
    pub vocab: Vocabulary,
}

pub fn read_posteriors(path: &Path) -> Result<Posteriors> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty posteriorgram")?;
    let n_classes = header.split(',').count().saturating_sub(2);
    let vocab = Vocabulary::with_size(n_classes).context("posteriorgram columns do not match a vocabulary")?;
    let mut intervals = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("line {}: bad number", i + 2))?;
        if fields.len() != n_classes + 2 {
            bail!(
                "line {}: expected {} columns, found {}",
                i + 2,
                n_classes + 2,
                fields.len()
            );
        }
        intervals.push((fields[0], fields[1]));
        values.extend_from_slice(&fields[2..]);
    }
    if intervals.is_empty() {
        bail!("posteriorgram has no frames");
    }
    let probs = ndarray::Array2::from_shape_vec((intervals.len(), n_classes), values)?;
    Ok(Posteriors {
        intervals,
        probs,
        vocab,
    })
}

pub fn csv_row(cells: impl IntoIterator<Item = String>) -> String {
    cells.into_iter().collect::<Vec<_>>().join(",") + "\n"
}
