//! Game configuration as written by the game master.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::ipf::{IpfParams, ReconcilePolicy};
use crate::voxel::{GridSpec, SiteFootprint};

/// Current config schema version.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ActorConfig {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub role: String,
    /// Initial agenda: sites × colours interest weights.
    pub agenda: Vec<Vec<f64>>,
    /// Decision power over each (site, colour) cell, sites × colours.
    pub control: Vec<Vec<f64>>,
    /// Default massing-criteria weights; uniform when omitted.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SiteConfig {
    pub name: String,
    pub polygon: Vec<[f64; 2]>,
    pub entry_point: [f64; 2],
    /// Height cap in metres above the grid origin.
    pub max_height: f64,
    /// Gross floor area cap in m²; the buildable envelope when omitted.
    #[serde(default)]
    pub max_gfa: Option<f64>,
    /// Existing voxels per colour.
    #[serde(default)]
    pub existing: Option<Vec<u64>>,
    /// Cost weight of changing one voxel per colour; ones when omitted.
    #[serde(default)]
    pub change_cost: Option<Vec<f64>>,
}

impl SiteConfig {
    pub fn footprint(&self) -> SiteFootprint {
        SiteFootprint {
            polygon: self.polygon.clone(),
            max_height: self.max_height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ColourConfig {
    pub name: String,
    /// Converts net area (m²) of this colour to gross volume (m³).
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum FieldSource {
    Solar,
    LowRise,
    EntryProximity,
    /// A field file; relative paths resolve against the config file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CriterionConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub source: FieldSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GameConfig {
    pub version: u32,
    pub name: String,
    pub actors: Vec<ActorConfig>,
    pub sites: Vec<SiteConfig>,
    pub colours: Vec<ColourConfig>,
    /// Net area per colour in m².
    pub programme: Vec<f64>,
    pub criteria: Vec<CriterionConfig>,
    /// Closeness ratings between colours, colours × colours in `[0, 1]`.
    pub closeness: Vec<Vec<f64>>,
    /// Site distances in metres; Euclidean between entry points when omitted.
    #[serde(default)]
    pub distances: Option<Vec<Vec<f64>>>,
    pub grid: GridSpec,
    #[serde(default)]
    pub ipf: IpfParams,
    #[serde(default)]
    pub reconcile: ReconcilePolicy,
    /// Lets the game master close a round with absent actors.
    #[serde(default)]
    pub allow_forced_advance: bool,
}

impl GameConfig {
    /// Reads a config and makes field-file paths absolute.
    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path).map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))?;
        let mut config: GameConfig =
            serde_json::from_str(&text).map_err(|e| EngineError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        serde_json::from_str(text).map_err(|e| EngineError::ConfigInvalid(e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for c in &mut self.criteria {
            if let FieldSource::File { path } = &mut c.source {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    /// `(m, n, o, e)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.actors.len(), self.sites.len(), self.colours.len(), self.criteria.len())
    }

    pub fn actor_index(&self, id: &str) -> Option<usize> {
        self.actors.iter().position(|a| a.id == id)
    }

    /// Structural checks that need no geometry.
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::ConfigInvalid(msg));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {}", self.version));
        }
        let (m, n, o, e) = self.dims();
        if m == 0 || n == 0 || o == 0 || e == 0 {
            return bad(format!("need at least one actor, site, colour and criterion, got ({m}, {n}, {o}, {e})"));
        }
        let mut ids: Vec<&str> = self.actors.iter().map(|a| a.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate actor id".into());
        }
        let shaped = |name: &str, rows: &[Vec<f64>], r: usize, c: usize| -> Result<(), EngineError> {
            if rows.len() != r || rows.iter().any(|row| row.len() != c) {
                return Err(EngineError::ConfigInvalid(format!("{name} must be {r}x{c}")));
            }
            if rows.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(EngineError::ConfigInvalid(format!("{name} must be finite and nonnegative")));
            }
            Ok(())
        };
        for a in &self.actors {
            shaped(&format!("agenda of {}", a.id), &a.agenda, n, o)?;
            shaped(&format!("control of {}", a.id), &a.control, n, o)?;
            if let Some(w) = &a.weights {
                shaped(&format!("weights of {}", a.id), std::slice::from_ref(w), 1, e)?;
            }
        }
        shaped("closeness", &self.closeness, o, o)?;
        if let Some(d) = &self.distances {
            shaped("distances", d, n, n)?;
        }
        shaped("programme", std::slice::from_ref(&self.programme), 1, o)?;
        for s in &self.sites {
            if s.existing.as_ref().is_some_and(|v| v.len() != o) {
                return bad(format!("existing volumes of site {} need {o} entries", s.name));
            }
            if let Some(g) = &s.change_cost {
                shaped(&format!("change costs of site {}", s.name), std::slice::from_ref(g), 1, o)?;
            }
            if s.max_gfa.is_some_and(|g| !g.is_finite() || g < 0.0) {
                return bad(format!("max GFA of site {} must be nonnegative", s.name));
            }
        }
        if self.colours.iter().any(|c| !(c.scale > 0.0) || !c.scale.is_finite()) {
            return bad("colour scale factors must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal() -> GameConfig {
        GameConfig::from_json(
            r#"{
              "version": 1,
              "name": "minimal",
              "actors": [{"id": "a", "name": "A", "agenda": [[1]], "control": [[1]]}],
              "sites": [{"name": "s", "polygon": [[0,0],[10,0],[10,10],[0,10]], "entryPoint": [0,0], "maxHeight": 10}],
              "colours": [{"name": "housing", "scale": 1.0}],
              "programme": [250],
              "criteria": [{"name": "solar", "source": {"kind": "solar"}}],
              "closeness": [[1]],
              "grid": {"origin": [0,0,0], "cellSize": 5, "extents": [2,2,2]}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn minimal_config_is_valid() {
        let c = minimal();
        c.validate().unwrap();
        assert_eq!(c.dims(), (1, 1, 1, 1));
        assert_eq!(c.reconcile, ReconcilePolicy::ScaleRows);
        assert_eq!(c.ipf, IpfParams::default());
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut c = minimal();
        c.actors[0].agenda = vec![vec![1.0, 2.0]];
        assert!(matches!(c.validate(), Err(EngineError::ConfigInvalid(_))));
        let mut c = minimal();
        c.actors.push(c.actors[0].clone());
        assert!(matches!(c.validate(), Err(EngineError::ConfigInvalid(_))));
    }

    #[test]
    fn relative_field_paths_resolve() {
        let mut c = minimal();
        c.criteria[0].source = FieldSource::File { path: "f.json".into() };
        c.resolve_paths(Path::new("/data"));
        assert_eq!(c.criteria[0].source, FieldSource::File { path: "/data/f.json".into() });
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = serde_json::to_string(&minimal()).unwrap().replacen("\"name\"", "\"nmae\"", 1);
        assert!(GameConfig::from_json(&text).is_err());
    }
}
