use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use lagflow::flow::{FlowHooks, FlowState};
use lagflow::{LagflowError, MapGrid, Result, TwistProfile};

pub trait Snapshot: Sized {
    const EXT: &'static str;
    fn write_to<W: Write>(&self, w: W) -> Result<()>;
    fn read_from(path: &Path) -> Result<Self>;

    fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

impl Snapshot for MapGrid {
    const EXT: &'static str = "map";

    fn write_to<W: Write>(&self, w: W) -> Result<()> {
        self.write_snapshot(w)
    }

    fn read_from(path: &Path) -> Result<Self> {
        MapGrid::read_snapshot(BufReader::new(File::open(path)?))
    }
}

impl Snapshot for TwistProfile {
    const EXT: &'static str = "twist";

    fn write_to<W: Write>(&self, w: W) -> Result<()> {
        self.write_snapshot(w)
    }

    fn read_from(path: &Path) -> Result<Self> {
        TwistProfile::read_snapshot(BufReader::new(File::open(path)?))
    }
}

/// Sidecar of a checkpoint or snapshot: `# t=<t> step=<k>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Meta {
    pub t: f64,
    pub step: usize,
}

impl Meta {
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, format!("# t={:.16e} step={}\n", self.t, self.step))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let bad = |msg: &str| LagflowError::Parse { line: 1, msg: format!("{}: {msg}", path.display()) };
        let rest = text.trim().strip_prefix('#').ok_or_else(|| bad("missing '#'"))?;
        let (mut t, mut step) = (None, None);
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("t", v)) => t = Some(v.parse::<f64>().map_err(|e| bad(&e.to_string()))?),
                Some(("step", v)) => step = Some(v.parse::<usize>().map_err(|e| bad(&e.to_string()))?),
                _ => return Err(bad(&format!("unexpected field '{field}'"))),
            }
        }
        Ok(Meta {
            t: t.ok_or_else(|| bad("missing t"))?,
            step: step.ok_or_else(|| bad("missing step"))?,
        })
    }
}

pub fn meta_path(snapshot: &Path) -> PathBuf {
    snapshot.with_extension("meta")
}

pub fn save_with_meta<M: Snapshot>(map: &M, path: &Path, meta: Meta) -> Result<()> {
    map.save(path)?;
    meta.write(&meta_path(path))
}

/// Snapshots under `dir` named `snap_<step>.<ext>`, ordered by step.
pub fn list_snapshots(dir: &Path, ext: &str) -> Result<Vec<(PathBuf, Meta)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let is_snap = path.extension().is_some_and(|e| e == ext)
            && path.file_name().and_then(|s| s.to_str()).is_some_and(|s| s.starts_with("snap_"));
        if is_snap {
            let meta = Meta::read(&meta_path(&path))?;
            out.push((path, meta));
        }
    }
    out.sort_by_key(|(_, m)| m.step);
    Ok(out)
}

pub struct OutputHooks {
    pub checkpoint_dir: PathBuf,
    pub snapshot_dir: Option<PathBuf>,
    pub stride: usize,
}

impl OutputHooks {
    pub fn new(out: &Path, emit_snapshots: bool, stride: usize) -> Result<Self> {
        let snapshot_dir = emit_snapshots.then(|| out.join("snapshots"));
        if let Some(d) = &snapshot_dir {
            fs::create_dir_all(d)?;
        }
        Ok(Self { checkpoint_dir: out.join("checkpoints"), snapshot_dir, stride })
    }

    pub fn snapshot<M: Snapshot>(&self, state: &FlowState<M>) -> Result<()> {
        if let Some(dir) = &self.snapshot_dir {
            let path = dir.join(format!("snap_{:09}.{}", state.step_index, M::EXT));
            save_with_meta(&state.map, &path, Meta { t: state.t, step: state.step_index })?;
        }
        Ok(())
    }
}

impl<M: Snapshot> FlowHooks<M> for OutputHooks {
    fn after_step(&mut self, state: &FlowState<M>) -> Result<()> {
        if state.step_index % self.stride == 0 {
            self.snapshot(state)?;
        }
        Ok(())
    }

    fn checkpoint(&mut self, state: &FlowState<M>) -> Result<()> {
        fs::create_dir_all(&self.checkpoint_dir)?;
        let path = self.checkpoint_dir.join(format!("ckpt_{:09}.{}", state.step_index, M::EXT));
        save_with_meta(&state.map, &path, Meta { t: state.t, step: state.step_index })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.meta");
        let m = Meta { t: 0.1 + 0.2, step: 1234 };
        m.write(&p).unwrap();
        assert_eq!(Meta::read(&p).unwrap(), m);
        fs::write(&p, "# t=abc step=1\n").unwrap();
        assert!(Meta::read(&p).is_err());
    }
}
