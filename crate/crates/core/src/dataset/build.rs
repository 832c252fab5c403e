use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{split_of, DataPoint, DatasetError, LightRecord, ManifestRow, PointSeeds, SplitRatios, PLANE_NAMES};
use crate::csg::{sample_scene, CsgScene, MAX_SOLIDS};
use crate::raster::{GrayImage, Mask};
use crate::render::{contour_to_image, render_planes, CameraPose, LightSpec, PlaneFlags, RenderOptions, RenderPlanes};
use crate::tam::{crop, TamFamily};

/// Parameters of one subset (fixed maximum solid count `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetConfig {
    pub k: usize,
    pub n_scenes: usize,
    pub n_poses: usize,
    pub seed: u64,
    pub flags: PlaneFlags,
    pub resolution: usize,
    pub ratios: SplitRatios,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
}

impl SubsetConfig {
    pub fn new(k: usize, n_scenes: usize, n_poses: usize, seed: u64) -> Self {
        Self {
            k,
            n_scenes,
            n_poses,
            seed,
            flags: PlaneFlags::default(),
            resolution: 256,
            ratios: SplitRatios::default(),
            jobs: 0,
        }
    }

    fn validate(&self) -> Result<(), DatasetError> {
        if !(1..=MAX_SOLIDS).contains(&self.k) {
            return Err(DatasetError::SubsetRange(self.k));
        }
        Ok(())
    }
}

/// Total data points for the given per-subset scene counts.
pub fn planned_count(scenes_per_subset: &[usize], n_poses: usize) -> usize {
    scenes_per_subset.iter().map(|n| n * n_poses).sum()
}

/// SplitMix64 finaliser over a sequence of words; a counter-based seed
/// scheme independent of execution order.
fn derive_seed(words: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for w in words {
        let mut z = h ^ w.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

const TAG_SCENE: u64 = 1;
const TAG_POSE: u64 = 2;
const TAG_CROP: u64 = 3;

struct SceneDraw {
    scene: CsgScene,
    light: LightSpec,
    family: usize,
    scene_seed: u64,
}

fn draw_scene(master: u64, k: usize, scene_id: u32, n_families: usize) -> Result<SceneDraw, DatasetError> {
    let scene_seed = derive_seed(&[master, TAG_SCENE, k as u64, scene_id as u64]);
    let scene = sample_scene(scene_seed, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
    rng.set_stream(7);
    let light = LightSpec::from_angles(rng.random_range(0.0..360.0), rng.random_range(15.0..75.0))
        .expect("sampled light is above the horizon");
    let family = rng.random_range(0..n_families);
    Ok(SceneDraw {
        scene,
        light,
        family,
        scene_seed,
    })
}

/// Azimuth stratified over `n_poses` sectors, elevation uniform in [10, 70].
fn draw_pose(scene: &CsgScene, pose_seed: u64, pose: u32, n_poses: usize) -> CameraPose {
    let mut rng = ChaCha8Rng::seed_from_u64(pose_seed);
    let sector = 360.0 / n_poses as f64;
    let az = ((pose as f64 + rng.random::<f64>()) * sector).min(359.999_999);
    let el = rng.random_range(10.0..=70.0);
    CameraPose::framing(az, el, scene.bounding_sphere().1)
}

/// Renders one data point from `(master seed, k, scene, pose)`.
pub fn render_point(
    cfg: &SubsetConfig,
    scene_id: u32,
    pose: u32,
    catalog: &[TamFamily],
) -> Result<DataPoint, DatasetError> {
    cfg.validate()?;
    let draw = draw_scene(cfg.seed, cfg.k, scene_id, catalog.len())?;
    render_from_draw(cfg, scene_id, pose, &draw, catalog)
}

fn render_from_draw(
    cfg: &SubsetConfig,
    scene_id: u32,
    pose: u32,
    draw: &SceneDraw,
    catalog: &[TamFamily],
) -> Result<DataPoint, DatasetError> {
    let pose_seed = derive_seed(&[draw.scene_seed, TAG_POSE, pose as u64]);
    let crop_seed = derive_seed(&[draw.scene_seed, TAG_CROP, pose as u64]);
    let camera = draw_pose(&draw.scene, pose_seed, pose, cfg.n_poses);
    let family = &catalog[draw.family];
    let crops = crop(family, crop_seed, cfg.resolution)?;
    let opts = RenderOptions::square(cfg.resolution);
    let planes = render_planes(&draw.scene, &camera, &draw.light, &crops, cfg.flags, &opts);
    let meta = ManifestRow {
        path: format!("k{}/scene{:04}/pose{:02}", cfg.k, scene_id, pose),
        k: cfg.k,
        scene_id,
        pose,
        split: split_of(cfg.k, scene_id, &cfg.ratios),
        light: LightRecord::from_spec(&draw.light),
        tam_family_id: family.id.clone(),
        seeds: PointSeeds {
            master: cfg.seed,
            scene: draw.scene_seed,
            pose: pose_seed,
            crop: crop_seed,
        },
        camera,
        n_solids: draw.scene.leaf_count(),
        resolution: cfg.resolution,
        background_hatch: cfg.flags.background_hatch,
        no_shadows: cfg.flags.no_shadows,
    };
    Ok(DataPoint { planes, crops, meta })
}

fn render_scene_points(cfg: &SubsetConfig, scene_id: u32, catalog: &[TamFamily]) -> Result<Vec<DataPoint>, DatasetError> {
    let draw = draw_scene(cfg.seed, cfg.k, scene_id, catalog.len())?;
    (0..cfg.n_poses as u32)
        .map(|pose| render_from_draw(cfg, scene_id, pose, &draw, catalog))
        .collect()
}

#[cfg(feature = "parallel")]
fn map_scenes<T: Send>(jobs: usize, n: usize, f: impl Fn(u32) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    let run = || (0..n as u32).into_par_iter().map(&f).collect();
    if jobs == 0 {
        return run();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_scenes<T: Send>(_jobs: usize, n: usize, f: impl Fn(u32) -> T + Sync + Send) -> Vec<T> {
    (0..n as u32).map(f).collect()
}

/// Renders a whole subset in memory, in scene then pose order.
pub fn generate_points(cfg: &SubsetConfig, catalog: &[TamFamily]) -> Result<Vec<DataPoint>, DatasetError> {
    cfg.validate()?;
    let per_scene = map_scenes(cfg.jobs, cfg.n_scenes, |s| render_scene_points(cfg, s, catalog));
    let mut out = Vec::with_capacity(cfg.n_scenes * cfg.n_poses);
    for scene in per_scene {
        out.extend(scene?);
    }
    Ok(out)
}

fn mask_png(m: &Mask) -> Vec<u8> {
    m.to_image().encode_png()
}

/// Encoded files of a data point, in the canonical order used for hashing.
fn point_files(p: &DataPoint) -> Result<Vec<(String, Vec<u8>)>, DatasetError> {
    let pl = &p.planes;
    let mut files = Vec::with_capacity(13);
    for name in PLANE_NAMES {
        let bytes = match name {
            "cnt" => contour_to_image(&pl.cnt).encode_png(),
            "ill" => pl.ill.encode_png(),
            "hi" => mask_png(&pl.hi),
            "mid" => mask_png(&pl.mid),
            "sha" => mask_png(&pl.sha),
            "shw" => mask_png(&pl.shw),
            "sk" => pl.sk.encode_png(),
            _ => pl.dif.encode_png(),
        };
        files.push((format!("{name}.png"), bytes));
    }
    for (k, t) in p.crops.iter().enumerate() {
        files.push((format!("t{}.png", k + 1), t.encode_png()));
    }
    let mut meta = serde_json::to_vec_pretty(&p.meta)?;
    meta.push(b'\n');
    files.push(("meta.json".to_string(), meta));
    Ok(files)
}

/// Writes a data point under `root/<meta.path>/`.
pub fn write_point(root: &Path, p: &DataPoint) -> Result<(), DatasetError> {
    let dir = root.join(&p.meta.path);
    fs::create_dir_all(&dir)?;
    for (name, bytes) in point_files(p)? {
        fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn read_mask(path: &Path) -> Result<Mask, DatasetError> {
    Ok(GrayImage::decode_png(&fs::read(path)?)?.binarize(0.5))
}

/// Loads a data point written by [`write_point`].
pub fn load_point(root: &Path, row: &ManifestRow) -> Result<DataPoint, DatasetError> {
    let dir = root.join(&row.path);
    let img = |name: &str| -> Result<GrayImage, DatasetError> {
        Ok(GrayImage::decode_png(&fs::read(dir.join(format!("{name}.png")))?)?)
    };
    let cnt_img = img("cnt")?;
    let cnt = Mask {
        width: cnt_img.width,
        height: cnt_img.height,
        data: cnt_img.data.iter().map(|v| *v < 0.5).collect(),
    };
    let hi = read_mask(&dir.join("hi.png"))?;
    let mid = read_mask(&dir.join("mid.png"))?;
    let sha = read_mask(&dir.join("sha.png"))?;
    let coverage = hi.or(&mid).or(&sha);
    let planes = RenderPlanes {
        dif: img("dif")?,
        hi,
        mid,
        sha,
        shw: read_mask(&dir.join("shw.png"))?,
        cnt,
        ill: img("ill")?,
        sk: img("sk")?,
        coverage,
    };
    let crops = [img("t1")?, img("t2")?, img("t3")?, img("t4")?];
    Ok(DataPoint {
        planes,
        crops,
        meta: row.clone(),
    })
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), DatasetError> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRow>, DatasetError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| DatasetError::Manifest { line: i + 1, source }))
        .collect()
}

fn write_scene(root: &Path, cfg: &SubsetConfig, scene_id: u32, catalog: &[TamFamily]) -> Result<Vec<ManifestRow>, (String, std::io::Error)> {
    let points = render_scene_points(cfg, scene_id, catalog).map_err(|e| (format!("scene {scene_id}"), std::io::Error::other(e.to_string())))?;
    let draw = draw_scene(cfg.seed, cfg.k, scene_id, catalog.len()).map_err(|e| (format!("scene {scene_id}"), std::io::Error::other(e.to_string())))?;
    let scene_dir = root.join(format!("k{}/scene{:04}", cfg.k, scene_id));
    fs::create_dir_all(&scene_dir).map_err(|e| (scene_dir.display().to_string(), e))?;
    fs::write(scene_dir.join("scene.csg"), crate::csg::serialize_scene(&draw.scene))
        .map_err(|e| (scene_dir.display().to_string(), e))?;
    let mut rows = Vec::with_capacity(points.len());
    for p in &points {
        write_point(root, p).map_err(|e| {
            let io = match e {
                DatasetError::Io(io) => io,
                other => std::io::Error::other(other.to_string()),
            };
            (root.join(&p.meta.path).display().to_string(), io)
        })?;
        rows.push(p.meta.clone());
    }
    Ok(rows)
}

/// Renders and writes one subset under `root`; returns its manifest rows in
/// scene order. On a write failure, the rows of the scenes that did finish
/// are saved to `manifest.partial.jsonl`.
pub fn build_subset(root: &Path, cfg: &SubsetConfig, catalog: &[TamFamily]) -> Result<Vec<ManifestRow>, DatasetError> {
    cfg.validate()?;
    fs::create_dir_all(root)?;
    let results = map_scenes(cfg.jobs, cfg.n_scenes, |s| write_scene(root, cfg, s, catalog));
    let mut rows = Vec::with_capacity(cfg.n_scenes * cfg.n_poses);
    let mut failure = None;
    let mut completed = 0;
    for r in results {
        match r {
            Ok(scene_rows) => {
                rows.extend(scene_rows);
                completed += 1;
            }
            Err(e) if failure.is_none() => failure = Some(e),
            Err(_) => {}
        }
    }
    if let Some((path, source)) = failure {
        let partial = root.join("manifest.partial.jsonl");
        write_manifest(&partial, &rows)?;
        return Err(DatasetError::Write {
            path,
            source,
            completed,
            partial: partial.display().to_string(),
        });
    }
    Ok(rows)
}

/// Builds subsets `ks` (same scene/pose counts) and writes `manifest.jsonl`.
pub fn build_corpus(root: &Path, base: &SubsetConfig, ks: &[usize], catalog: &[TamFamily]) -> Result<Vec<ManifestRow>, DatasetError> {
    let mut rows = Vec::new();
    for &k in ks {
        let cfg = SubsetConfig { k, ..base.clone() };
        rows.extend(build_subset(root, &cfg, catalog)?);
    }
    write_manifest(&root.join("manifest.jsonl"), &rows)?;
    Ok(rows)
}

/// Re-renders a data point from its manifest row.
pub fn regenerate_point(row: &ManifestRow, n_poses: usize, catalog: &[TamFamily]) -> Result<DataPoint, DatasetError> {
    let cfg = SubsetConfig {
        flags: PlaneFlags {
            background_hatch: row.background_hatch,
            no_shadows: row.no_shadows,
        },
        resolution: row.resolution,
        ..SubsetConfig::new(row.k, 0, n_poses, row.seeds.master)
    };
    let mut p = render_point(&cfg, row.scene_id, row.pose, catalog)?;
    p.meta.split = row.split;
    Ok(p)
}

/// SHA-256 over the manifest file and every data point file, in manifest order.
pub fn content_hash(root: &Path) -> Result<String, DatasetError> {
    let manifest_path = root.join("manifest.jsonl");
    let mut h = Sha256::new();
    h.update(fs::read(&manifest_path)?);
    for row in load_manifest(&manifest_path)? {
        let dir: PathBuf = root.join(&row.path);
        let mut names: Vec<String> = PLANE_NAMES.iter().map(|n| format!("{n}.png")).collect();
        names.extend((1..=4).map(|k| format!("t{k}.png")));
        names.push("meta.json".into());
        for n in names {
            h.update(n.as_bytes());
            h.update(fs::read(dir.join(&n))?);
        }
    }
    Ok(hex::encode(h.finalize()))
}

/// Encoded bytes of a point, for regeneration checks.
pub fn encoded_files(p: &DataPoint) -> Result<Vec<(String, Vec<u8>)>, DatasetError> {
    point_files(p)
}
