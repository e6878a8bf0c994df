//! Line-delimited JSON transition files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{ReplayBuffer, Transition};
use crate::error::{ReqError, Result};

/// Writes one JSON record per line.
pub fn save_dataset<'a, I>(path: &Path, transitions: I) -> Result<()>
where
    I: IntoIterator<Item = &'a Transition>,
{
    let mut out = BufWriter::new(File::create(path)?);
    for t in transitions {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset. Blank lines are skipped; `dims` optionally checks
/// `(obs_dim, action_dim)` of every record.
pub fn load_dataset(path: &Path, dims: Option<(usize, usize)>) -> Result<Vec<Transition>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| ReqError::Dataset {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let t: Transition = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        t.validate().map_err(|e| fail(e.to_string()))?;
        if t.observation.len() != t.next_observation.len() {
            return Err(fail("obs and next_obs lengths differ".into()));
        }
        if let Some((obs_dim, action_dim)) = dims {
            if t.observation.len() != obs_dim {
                return Err(fail(format!(
                    "obs has {} entries, expected {obs_dim}",
                    t.observation.len()
                )));
            }
            if t.action.len() != action_dim {
                return Err(fail(format!(
                    "action has {} entries, expected {action_dim}",
                    t.action.len()
                )));
            }
        }
        out.push(t);
    }
    Ok(out)
}

/// Loads a dataset into a buffer large enough to hold all of it.
pub fn load_offline_dataset(path: &Path, dims: Option<(usize, usize)>) -> Result<ReplayBuffer> {
    let transitions = load_dataset(path, dims)?;
    let capacity = transitions.len().max(1);
    Ok(ReplayBuffer::from_transitions(transitions, capacity))
}
