//! Module parameter checkpoints: a one-line JSON header describing the
//! automaton and every module's estimator shape, followed by the parameters
//! as little-endian f64 arrays concatenated in header order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dfa::{from_fixture, to_fixture, Dfa};
use crate::grid::GridWorld;

use super::estimator::{QTable, NUM_ACTIONS};
use super::mlp::Mlp;
use super::{Estimator, QModule, RlError};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    gamma: f64,
    /// The automaton in the plain-text fixture format.
    dfa: String,
    modules: Vec<ModuleMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ModuleMeta {
    Table {
        owner: u32,
        cells: usize,
        width: u32,
    },
    Mlp {
        owner: u32,
        dims: Vec<usize>,
    },
}

fn param_count(meta: &ModuleMeta) -> usize {
    match meta {
        ModuleMeta::Table { cells, .. } => cells * NUM_ACTIONS,
        ModuleMeta::Mlp { dims, .. } => dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum(),
    }
}

pub fn save(
    path: &Path,
    dfa: &Dfa,
    modules: &[QModule],
    gamma: f64,
) -> Result<(), RlError> {
    let metas: Vec<ModuleMeta> = modules
        .iter()
        .map(|m| match &m.estimator {
            Estimator::Table(t) => ModuleMeta::Table {
                owner: m.owner,
                cells: t.values.len(),
                width: t.width,
            },
            Estimator::Net(n) => ModuleMeta::Mlp {
                owner: m.owner,
                dims: n.dims(),
            },
        })
        .collect();
    let header = Header {
        format: "synthrl-modules".into(),
        version: 1,
        gamma,
        dfa: to_fixture(dfa),
        modules: metas,
    };
    let mut file = std::fs::File::create(path)
        .map_err(|e| RlError::Checkpoint(format!("create {}: {e}", path.display())))?;
    let header_line =
        serde_json::to_string(&header).map_err(|e| RlError::Checkpoint(e.to_string()))?;
    writeln!(file, "{header_line}").map_err(|e| RlError::Checkpoint(e.to_string()))?;
    for m in modules {
        let flat: Vec<f64> = match &m.estimator {
            Estimator::Table(t) => t.values.iter().flatten().copied().collect(),
            Estimator::Net(n) => n.params(),
        };
        for v in flat {
            file.write_all(&v.to_le_bytes())
                .map_err(|e| RlError::Checkpoint(e.to_string()))?;
        }
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<(Dfa, Vec<QModule>, f64), RlError> {
    let file = std::fs::File::open(path)
        .map_err(|e| RlError::Checkpoint(format!("open {}: {e}", path.display())))?;
    let mut reader = BufReader::new(file);
    let mut header_line = String::new();
    reader
        .read_line(&mut header_line)
        .map_err(|e| RlError::Checkpoint(e.to_string()))?;
    let header: Header = serde_json::from_str(header_line.trim())
        .map_err(|e| RlError::Checkpoint(format!("bad header: {e}")))?;
    if header.format != "synthrl-modules" || header.version != 1 {
        return Err(RlError::Checkpoint("unsupported checkpoint format".into()));
    }
    let dfa = from_fixture(&header.dfa)
        .map_err(|e| RlError::Checkpoint(format!("bad automaton: {e}")))?;
    let mut modules = Vec::with_capacity(header.modules.len());
    for meta in &header.modules {
        let n_params = param_count(meta);
        let mut bytes = vec![0u8; n_params * 8];
        reader
            .read_exact(&mut bytes)
            .map_err(|e| RlError::Checkpoint(format!("truncated parameters: {e}")))?;
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (owner, estimator) = match meta {
            ModuleMeta::Table { owner, cells, width } => {
                let mut table = QTable {
                    values: vec![[0.0; NUM_ACTIONS]; *cells],
                    width: *width,
                };
                for (i, chunk) in flat.chunks_exact(NUM_ACTIONS).enumerate() {
                    table.values[i].copy_from_slice(chunk);
                }
                (*owner, Estimator::Table(table))
            }
            ModuleMeta::Mlp { owner, dims } => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
                use rand::SeedableRng;
                let mut net = Mlp::new(dims, &mut rng);
                net.set_params(&flat);
                (*owner, Estimator::Net(net))
            }
        };
        modules.push(QModule::new(owner, estimator, 1));
    }
    let mut trailing = Vec::new();
    reader
        .read_to_end(&mut trailing)
        .map_err(|e| RlError::Checkpoint(e.to_string()))?;
    if !trailing.is_empty() {
        return Err(RlError::Checkpoint(format!(
            "{} unexpected trailing bytes",
            trailing.len()
        )));
    }
    Ok((dfa, modules, header.gamma))
}

/// Sanity guard used before evaluation: module tables must match the world.
pub fn check_world(modules: &[QModule], world: &GridWorld) -> Result<(), RlError> {
    for m in modules {
        if let Estimator::Table(t) = &m.estimator {
            if t.values.len() != world.num_cells() || t.width != world.width {
                return Err(RlError::Checkpoint(
                    "checkpoint tables do not match the map size".into(),
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::load_map;
    use crate::rl::nfq::{make_modules, Backend};
    use crate::trace::label;

    fn tiny_dfa() -> Dfa {
        let mut d = Dfa::new(2);
        d.alphabet.insert(label("wood"));
        d.delta.insert((1, label("wood")), 2);
        d.accepting.insert(2);
        d
    }

    #[test]
    fn table_checkpoint_round_trips() {
        let world = load_map("@.\nW.").unwrap();
        let dfa = tiny_dfa();
        let mut modules = make_modules(&world, &dfa, &Backend::Tabular, 4, 0);
        if let Estimator::Table(t) = &mut modules[0].estimator {
            t.set((1, 0), 2, 0.625);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save(&path, &dfa, &modules, 0.97).unwrap();
        let (dfa2, modules2, gamma) = load(&path).unwrap();
        assert_eq!(dfa2, dfa);
        assert_eq!(gamma, 0.97);
        assert_eq!(modules2.len(), 2);
        assert_eq!(modules2[0].estimator, modules[0].estimator);
        check_world(&modules2, &world).unwrap();
    }

    #[test]
    fn mlp_checkpoint_round_trips() {
        let world = load_map("@.").unwrap();
        let dfa = tiny_dfa();
        let modules = make_modules(&world, &dfa, &Backend::Mlp { hidden: vec![8] }, 4, 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save(&path, &dfa, &modules, 0.99).unwrap();
        let (_, modules2, _) = load(&path).unwrap();
        assert_eq!(modules2[1].estimator, modules[1].estimator);
    }

    #[test]
    fn truncated_checkpoint_is_detected() {
        let world = load_map("@.").unwrap();
        let dfa = tiny_dfa();
        let modules = make_modules(&world, &dfa, &Backend::Tabular, 4, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save(&path, &dfa, &modules, 0.99).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load(&path), Err(RlError::Checkpoint(_))));
    }
}
