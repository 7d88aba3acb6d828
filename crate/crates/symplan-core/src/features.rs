//! Object-centric feature sequences and their on-disk format.
//!
//! A dataset is a directory with a `manifest.json` and one raw binary file per
//! trajectory. The binary holds `T*K*D` little-endian 32-bit floats in
//! `[frame][object][dim]` order, so any upstream feature extractor can emit it
//! without linking this crate. Internally values are widened to the scalar
//! type `T` (the default lane uses `f64`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Vectors with a norm below this are rejected: cosine similarity is
/// undefined on them.
pub const MIN_NORM: f64 = 1e-12;

/// Points at one frame of one trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameRef {
    pub trajectory_id: String,
    pub frame_index: usize,
}

impl FrameRef {
    pub fn new(trajectory_id: impl Into<String>, frame_index: usize) -> Self {
        Self {
            trajectory_id: trajectory_id.into(),
            frame_index,
        }
    }
}

impl std::fmt::Display for FrameRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.trajectory_id, self.frame_index)
    }
}

/// One play episode: a `T x K x D` block of per-frame, per-object features.
#[derive(Debug, Clone)]
pub struct PlayTrajectory<T> {
    id: String,
    num_frames: usize,
    num_objects: usize,
    dim: usize,
    features: Vec<T>,
}

impl<T: Real> PlayTrajectory<T> {
    /// Validates shape, finiteness, and per-object vector norms.
    pub fn new(
        id: impl Into<String>,
        num_frames: usize,
        num_objects: usize,
        dim: usize,
        features: Vec<T>,
    ) -> Result<Self> {
        let id = id.into();
        if num_frames < 2 {
            return Err(Error::InvalidParameter {
                name: "num_frames",
                reason: format!("trajectory {id} has {num_frames} frames, need at least 2"),
            });
        }
        if num_objects < 1 || dim < 1 {
            return Err(Error::InvalidParameter {
                name: "shape",
                reason: format!("trajectory {id}: K and D must be at least 1"),
            });
        }
        let expected = num_frames * num_objects * dim;
        if features.len() != expected {
            return Err(Error::ShapeMismatch {
                id,
                expected,
                actual: features.len(),
            });
        }
        let traj = Self {
            id,
            num_frames,
            num_objects,
            dim,
            features,
        };
        traj.validate_values()?;
        Ok(traj)
    }

    fn validate_values(&self) -> Result<()> {
        for t in 0..self.num_frames {
            for k in 0..self.num_objects {
                let v = self.object_slice(t, k);
                let mut sq = T::zero();
                for (d, &x) in v.iter().enumerate() {
                    if !x.is_finite() {
                        return Err(Error::NonFiniteFeature {
                            id: self.id.clone(),
                            frame: t,
                            object: k,
                            dim: d,
                        });
                    }
                    sq = sq + x * x;
                }
                if sq.sqrt().as_f64() < MIN_NORM {
                    return Err(Error::ZeroNorm {
                        location: format!("trajectory {}, frame {t}, object {k}", self.id),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_objects(&self) -> usize {
        self.num_objects
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn object_slice(&self, frame: usize, object: usize) -> &[T] {
        let start = (frame * self.num_objects + object) * self.dim;
        &self.features[start..start + self.dim]
    }

    /// Feature vector of one object at one frame.
    pub fn object_feature(&self, frame: usize, object: usize) -> Result<&[T]> {
        self.check_frame(frame)?;
        if object >= self.num_objects {
            return Err(Error::InvalidParameter {
                name: "object",
                reason: format!(
                    "object {object} out of range for trajectory {} ({} objects)",
                    self.id, self.num_objects
                ),
            });
        }
        Ok(self.object_slice(frame, object))
    }

    /// Concatenation of the K object vectors at one frame, in object order.
    /// The storage layout makes this a contiguous `K*D` slice.
    pub fn frame_feature(&self, frame: usize) -> Result<&[T]> {
        self.check_frame(frame)?;
        let start = frame * self.num_objects * self.dim;
        Ok(&self.features[start..start + self.num_objects * self.dim])
    }

    fn check_frame(&self, frame: usize) -> Result<()> {
        if frame >= self.num_frames {
            return Err(Error::IndexOutOfRange {
                id: self.id.clone(),
                index: frame,
                frames: self.num_frames,
            });
        }
        Ok(())
    }

    fn raw(&self) -> &[T] {
        &self.features
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    dim_d: usize,
    num_objects: usize,
    object_names: Vec<String>,
    trajectories: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    num_frames: usize,
    file: String,
}

/// An ordered collection of trajectories sharing the same K and D.
#[derive(Debug, Clone)]
pub struct PlayDataset<T> {
    trajectories: Vec<PlayTrajectory<T>>,
    object_names: Vec<String>,
    num_objects: usize,
    dim: usize,
}

impl<T: Real> PlayDataset<T> {
    pub fn new(trajectories: Vec<PlayTrajectory<T>>, object_names: Vec<String>) -> Result<Self> {
        let first = trajectories.first().ok_or(Error::InvalidParameter {
            name: "trajectories",
            reason: "dataset needs at least one trajectory".into(),
        })?;
        let (num_objects, dim) = (first.num_objects(), first.dim());
        for traj in &trajectories {
            if traj.num_objects() != num_objects || traj.dim() != dim {
                return Err(Error::InvalidParameter {
                    name: "trajectories",
                    reason: format!(
                        "trajectory {} has shape K={} D={}, dataset has K={} D={}",
                        traj.id(),
                        traj.num_objects(),
                        traj.dim(),
                        num_objects,
                        dim
                    ),
                });
            }
        }
        let object_names = if object_names.is_empty() {
            (0..num_objects).map(|k| format!("object-{k}")).collect()
        } else if object_names.len() == num_objects {
            object_names
        } else {
            return Err(Error::InvalidParameter {
                name: "object_names",
                reason: format!("{} names for {} objects", object_names.len(), num_objects),
            });
        };
        Ok(Self {
            trajectories,
            object_names,
            num_objects,
            dim,
        })
    }

    /// Load a dataset directory written by [`PlayDataset::save`] or any
    /// producer of the same layout.
    pub fn load(root: &Path) -> Result<Self> {
        let manifest_path = root.join("manifest.json");
        if !manifest_path.is_file() {
            return Err(Error::MissingManifest(root.to_path_buf()));
        }
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
        let mut trajectories = Vec::with_capacity(manifest.trajectories.len());
        for entry in &manifest.trajectories {
            let bytes = fs::read(root.join(&entry.file))?;
            if bytes.len() % 4 != 0 {
                return Err(Error::ShapeMismatch {
                    id: entry.id.clone(),
                    expected: entry.num_frames * manifest.num_objects * manifest.dim_d,
                    actual: bytes.len() / 4,
                });
            }
            let values: Vec<T> = bytes
                .chunks_exact(4)
                .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                .collect();
            trajectories.push(PlayTrajectory::new(
                entry.id.clone(),
                entry.num_frames,
                manifest.num_objects,
                manifest.dim_d,
                values,
            )?);
        }
        Self::new(trajectories, manifest.object_names)
    }

    /// Write manifest plus one binary file per trajectory. Values are stored
    /// as 32-bit floats.
    pub fn save(&self, root: &Path) -> Result<()> {
        // ids name the binary files; keep them inside the dataset directory
        for traj in &self.trajectories {
            let id = traj.id();
            if id.contains('/') || id.contains('\\') || id.contains("..") || id.is_empty() {
                return Err(Error::InvalidParameter {
                    name: "trajectory_id",
                    reason: format!("{id:?} is not a safe file name"),
                });
            }
        }
        fs::create_dir_all(root)?;
        let manifest = Manifest {
            dim_d: self.dim,
            num_objects: self.num_objects,
            object_names: self.object_names.clone(),
            trajectories: self
                .trajectories
                .iter()
                .map(|t| ManifestEntry {
                    id: t.id().to_string(),
                    num_frames: t.num_frames(),
                    file: format!("{}.bin", t.id()),
                })
                .collect(),
        };
        fs::write(
            root.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        for traj in &self.trajectories {
            let mut bytes = Vec::with_capacity(traj.raw().len() * 4);
            for &v in traj.raw() {
                bytes.extend_from_slice(&v.as_f32().to_le_bytes());
            }
            fs::write(root.join(format!("{}.bin", traj.id())), bytes)?;
        }
        Ok(())
    }

    pub fn trajectories(&self) -> &[PlayTrajectory<T>] {
        &self.trajectories
    }

    pub fn trajectory(&self, id: &str) -> Result<&PlayTrajectory<T>> {
        self.trajectories
            .iter()
            .find(|t| t.id() == id)
            .ok_or_else(|| Error::UnknownTrajectory(id.to_string()))
    }

    /// Frame feature (length `K*D`) behind a [`FrameRef`].
    pub fn resolve(&self, frame: &FrameRef) -> Result<&[T]> {
        let traj =
            self.trajectory(&frame.trajectory_id)
                .map_err(|_| Error::UnresolvableFrameRef {
                    trajectory: frame.trajectory_id.clone(),
                    frame: frame.frame_index,
                })?;
        traj.frame_feature(frame.frame_index)
            .map_err(|_| Error::UnresolvableFrameRef {
                trajectory: frame.trajectory_id.clone(),
                frame: frame.frame_index,
            })
    }

    pub fn num_objects(&self) -> usize {
        self.num_objects
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn object_names(&self) -> &[String] {
        &self.object_names
    }

    /// Total frame count over all trajectories.
    pub fn total_frames(&self) -> usize {
        self.trajectories.iter().map(|t| t.num_frames()).sum()
    }
}

/// Cosine similarity of two equal-length vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut dot = T::zero();
    let mut na = T::zero();
    let mut nb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    let min_norm = T::of(MIN_NORM);
    if na < min_norm || nb < min_norm {
        return Err(Error::ZeroNorm {
            location: "cosine input".into(),
        });
    }
    Ok((dot / (na * nb)).min(T::one()).max(-T::one()))
}
