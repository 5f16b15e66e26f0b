//! Library side of each subcommand. Every function is deterministic given
//! its inputs and the config seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use motionsync::bundle::{self, KeyValues, ModelBundle, TrainedModel, MANIFEST};
use motionsync::data::{
    generate_direction_clips, generate_sinusoid_pair, generate_translating_patches, synthetic_images, BlockDims,
    PatchDataset, VideoBlock, WhiteningTransform,
};
use motionsync::linalg::RowMatrix;
use motionsync::pipeline::{
    build_vocabulary, evaluate_loo, evaluate_split, fit_descriptor_pca, kernel_matrix, mean_pairwise_distance,
    pool_features, DescriptorExtractor, EvalReport,
};
use motionsync::rng;
use motionsync::sae::{train_model, ContractiveAe, LossParts};
use motionsync::skmeans::{OnlineKMeans, TrainingData};
use motionsync::vtb::Tensor;
use motionsync::{Error, Histogram, Mode, Result, SaeModel, SkMeansModel};
use rand::seq::index::sample;

use crate::config::RunConfig;
use crate::viz;

// Sub-stream ids under the master seed; stream 1 is the training order
// (see `RunConfig::skmeans`).
const STREAM_INIT: u64 = 2;
const STREAM_VOCAB: u64 = 3;
const STREAM_POOLING: u64 = 4;
const STREAM_WHITEN_SAMPLE: u64 = 5;
const STREAM_SOURCES: u64 = 10;
const STREAM_DATA: u64 = 11;

/// Datasets `gen-data` can write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DataKind {
    /// Patches whose frames translate by a random per-patch shift.
    Translations,
    /// One shifted sinusoid pair stored as a 2x1xN patch.
    Sinusoids,
    /// Four-class clips moving up, down, left or right.
    Directions,
}

impl DataKind {
    pub fn name(self) -> &'static str {
        match self {
            DataKind::Translations => "translations",
            DataKind::Sinusoids => "sinusoids",
            DataKind::Directions => "directions",
        }
    }
}

/// Models `train` can fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Skmeans,
    Sae,
    Kmeans,
    AeBaseline,
}

pub fn generate(kind: DataKind, cfg: &RunConfig) -> Result<PatchDataset> {
    let data_seed = rng::derive(cfg.seed, STREAM_DATA);
    let sources = || {
        synthetic_images(
            cfg.data_source_count,
            cfg.data_source_size,
            cfg.data_source_size,
            rng::derive(cfg.seed, STREAM_SOURCES),
        )
    };
    match kind {
        DataKind::Translations => {
            generate_translating_patches(&sources(), cfg.data_count, cfg.data_dims, cfg.data_max_shift, data_seed)
        }
        DataKind::Directions => {
            generate_direction_clips(&sources(), cfg.data_count, cfg.data_dims, cfg.data_speed, data_seed)
        }
        DataKind::Sinusoids => {
            let n = cfg.sinusoid_n;
            let (x1, x2) = generate_sinusoid_pair(n, cfg.sinusoid_freq, cfg.sinusoid_phase, cfg.sinusoid_shift)?;
            let values = x1.iter().chain(&x2).map(|&v| v as f32).collect();
            let block = VideoBlock::new(BlockDims::new(2, 1, n), values)?;
            PatchDataset::new(vec![block], None, data_seed)
        }
    }
}

pub fn gen_data(kind: DataKind, out: &Path, cfg: &RunConfig) -> Result<PatchDataset> {
    let data = generate(kind, cfg)?;
    bundle::save_dataset(out, &data, kind.name(), &config_extra(cfg))?;
    Ok(data)
}

fn config_extra(cfg: &RunConfig) -> BTreeMap<String, String> {
    cfg.entries()
        .into_iter()
        .map(|(k, v)| (format!("config.{k}"), v))
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Whitening fitted on a seeded subsample of at most
/// `whitening.max_samples` patches. Pair mode fits on frames 0 and 1.
pub fn fit_model_whitening(data: &PatchDataset, mode: Mode, cfg: &RunConfig) -> Result<WhiteningTransform> {
    let dims = data
        .dims()
        .ok_or_else(|| Error::InvalidArgument("training dataset is empty".into()))?;
    let n = data.len();
    let mut idx: Vec<usize> = if n > cfg.whitening_max_samples && cfg.whitening_max_samples > 0 {
        let mut r = rng::seeded(rng::derive(cfg.seed, STREAM_WHITEN_SAMPLE));
        sample(&mut r, n, cfg.whitening_max_samples).into_vec()
    } else {
        (0..n).collect()
    };
    idx.sort_unstable();
    let patches = data.patches();
    let rows = match mode {
        Mode::Sequence => {
            let mut v = Vec::with_capacity(idx.len() * dims.len());
            for &i in &idx {
                v.extend(patches[i].values().iter().map(|&x| f64::from(x)));
            }
            RowMatrix::from_vec(idx.len(), dims.len(), v)?
        }
        Mode::Pair => {
            if dims.t < 2 {
                return Err(Error::Shape(format!("pair mode needs >= 2 frames, patches are {dims}")));
            }
            let mut v = Vec::with_capacity(2 * idx.len() * dims.frame_len());
            for &i in &idx {
                for t in 0..2 {
                    v.extend(patches[i].frame(t).iter().map(|&x| f64::from(x)));
                }
            }
            RowMatrix::from_vec(2 * idx.len(), dims.frame_len(), v)?
        }
    };
    WhiteningTransform::fit(&rows, &cfg.whitening())
}

/// A trained bundle and its loss trace as CSV.
#[derive(Debug, Clone)]
pub struct Trained {
    pub bundle: ModelBundle,
    pub trace_csv: String,
}

fn scalar_trace(trace: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (e, l) in trace.iter().enumerate() {
        s.push_str(&format!("{e},{l:?}\n"));
    }
    s
}

fn parts_trace(trace: &[LossParts]) -> String {
    let mut s = String::from("epoch,recon,contraction,total\n");
    for (e, l) in trace.iter().enumerate() {
        s.push_str(&format!("{e},{:?},{:?},{:?}\n", l.recon, l.contraction, l.total));
    }
    s
}

pub fn train(kind: ModelKind, data: &PatchDataset, cfg: &RunConfig) -> Result<Trained> {
    let dims = data
        .dims()
        .ok_or_else(|| Error::InvalidArgument("training dataset is empty".into()))?;
    let mode = match kind {
        ModelKind::Skmeans | ModelKind::Sae => cfg.model_mode,
        ModelKind::Kmeans | ModelKind::AeBaseline => {
            if cfg.model_mode == Mode::Pair {
                return Err(Error::InvalidArgument(
                    "the k-means and autoencoder baselines only run in sequence mode".into(),
                ));
            }
            Mode::Sequence
        }
    };
    let whitening = fit_model_whitening(data, mode, cfg)?;
    let d = whitening.retained_dims();
    let q = cfg.model_units;
    let init_seed = rng::derive(cfg.seed, STREAM_INIT);
    let frame_dims = match mode {
        Mode::Sequence => dims,
        Mode::Pair => BlockDims::new(2, dims.h, dims.w),
    };
    let (model, trace_csv) = match kind {
        ModelKind::Skmeans => {
            let mut m = match mode {
                Mode::Sequence => SkMeansModel::init_sequence(q, d, frame_dims, init_seed)?,
                Mode::Pair => SkMeansModel::init_pair(q, d, frame_dims, init_seed)?,
            };
            let trace = m.train(data, &cfg.skmeans(), &whitening)?;
            (TrainedModel::SkMeans(m), scalar_trace(&trace))
        }
        ModelKind::Kmeans => {
            let mut m = OnlineKMeans::init(q, d, frame_dims, init_seed)?;
            let trace = m.train(data, &cfg.skmeans(), &whitening)?;
            (TrainedModel::KMeans(m), scalar_trace(&trace))
        }
        ModelKind::Sae => {
            let m = match mode {
                Mode::Sequence => SaeModel::init_sequence(q, d, cfg.sae_lambda, frame_dims, init_seed)?,
                Mode::Pair => SaeModel::init_pair(q, d, cfg.sae_lambda, cfg.sae_tied, frame_dims, init_seed)?,
            };
            let mut m = m.with_bias(cfg.sae_bias.then(|| vec![0.0; q]))?;
            let trace = m.train(data, &cfg.sae(), &whitening)?;
            (TrainedModel::Sae(m), parts_trace(&trace))
        }
        ModelKind::AeBaseline => {
            let mut m = ContractiveAe::init(q, d, cfg.sae_lambda, frame_dims, init_seed)?;
            let inputs = TrainingData::prepare(Mode::Sequence, data, &whitening, d)?.inputs();
            let trace = train_model(&mut m, &inputs, &cfg.sae())?;
            (TrainedModel::ContractiveAe(m), parts_trace(&trace))
        }
    };
    let mut bundle = ModelBundle::new(model, Some(whitening));
    bundle.extra = config_extra(cfg);
    Ok(Trained { bundle, trace_csv })
}

pub fn train_to_dir(kind: ModelKind, data: &PatchDataset, out: &Path, cfg: &RunConfig) -> Result<Trained> {
    let trained = train(kind, data, cfg)?;
    trained.bundle.save(out)?;
    write_text(&out.join("trace.csv"), &trained.trace_csv)?;
    Ok(trained)
}

/// Per-video descriptors and word histograms.
#[derive(Debug, Clone)]
pub struct Features {
    /// One matrix per video, one row per super block.
    pub descriptors: Vec<RowMatrix>,
    pub histograms: Vec<Histogram>,
    pub labels: Option<Vec<u32>>,
}

fn require_whitening(bundle: &ModelBundle) -> Result<&WhiteningTransform> {
    bundle
        .whitening
        .as_ref()
        .ok_or_else(|| Error::NotFitted("model bundle has no whitening transform".into()))
}

fn check_pipeline_model(bundle: &ModelBundle) -> Result<()> {
    if bundle.model.mode() == Mode::Pair {
        return Err(Error::InvalidArgument(
            "the descriptor pipeline encodes whole sub blocks; train a sequence-mode model".into(),
        ));
    }
    Ok(())
}

/// Hidden vectors of a seeded selection of videos, capped near `limit` rows.
fn pooling_hiddens(ex: &DescriptorExtractor<'_>, bundle: &ModelBundle, videos: &PatchDataset, limit: usize, seed: u64) -> Result<RowMatrix> {
    let enc = bundle.model.encoder();
    let mut order: Vec<usize> = (0..videos.len()).collect();
    let mut r = rng::seeded(seed);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut r);
    let mut data = Vec::new();
    let mut rows = 0;
    let mut h = vec![0.0; enc.units()];
    for i in order {
        if rows >= limit {
            break;
        }
        let subs = ex.video_subblocks(&videos.patches()[i])?;
        for row in subs.iter_rows() {
            enc.encode_into(row, &mut h)?;
            data.extend_from_slice(&h);
            rows += 1;
        }
    }
    RowMatrix::from_vec(rows, enc.units(), data)
}

fn stack(mats: &[RowMatrix]) -> Result<RowMatrix> {
    let cols = mats.first().map_or(0, RowMatrix::cols);
    let rows = mats.iter().map(RowMatrix::rows).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for m in mats {
        data.extend_from_slice(m.as_slice());
    }
    RowMatrix::from_vec(rows, cols, data)
}

/// Descriptors and histograms for every video. With `fit`, the pooling
/// layer (when `pipeline.pooling` is on), descriptor PCA and vocabulary
/// are fitted on these videos and stored in `bundle` first.
pub fn extract(bundle: &mut ModelBundle, videos: &PatchDataset, cfg: &RunConfig, fit: bool) -> Result<Features> {
    if videos.is_empty() {
        return Err(Error::InvalidArgument("video set is empty".into()));
    }
    check_pipeline_model(bundle)?;
    let dcfg = cfg.descriptor();
    if fit {
        bundle.pooling = if cfg.pooling {
            let whitening = require_whitening(bundle)?;
            let ex = DescriptorExtractor::new(bundle.model.encoder(), whitening, dcfg.clone())?;
            let seed = rng::derive(cfg.seed, STREAM_POOLING);
            let hiddens = pooling_hiddens(&ex, bundle, videos, cfg.pooling_samples, seed)?;
            Some(pool_features(&hiddens, cfg.pooling_centroids, seed, cfg.vocab_iterations)?)
        } else {
            None
        };
    } else if bundle.pca.is_none() || bundle.codebook.is_none() {
        return Err(Error::NotFitted(
            "model bundle has no descriptor PCA or codebook; run `extract --fit-codebook` on the training videos first and pass the model it writes".into(),
        ));
    }
    let whitening = require_whitening(bundle)?;
    let mut ex = DescriptorExtractor::new(bundle.model.encoder(), whitening, dcfg.clone())?;
    if let Some(p) = &bundle.pooling {
        ex = ex.with_pooling(p)?;
    }
    let raws = videos
        .patches()
        .iter()
        .map(|v| ex.raw_descriptors(v))
        .collect::<Result<Vec<_>>>()?;
    let (pca, codebook) = if fit {
        let all = stack(&raws)?;
        let pca = fit_descriptor_pca(&all, dcfg.descriptor_pca_dims)?;
        let projected = pca.project_rows(&all)?;
        let book = build_vocabulary(
            &projected,
            dcfg.vocab_size,
            rng::derive(cfg.seed, STREAM_VOCAB),
            dcfg.vocab_iterations,
        )?;
        (pca, book)
    } else {
        (
            bundle.pca.clone().expect("checked above"),
            bundle.codebook.clone().expect("checked above"),
        )
    };
    let ex = ex.with_pca(pca.clone())?;
    let descriptors = raws
        .iter()
        .map(|r| pca.project_rows(r))
        .collect::<Result<Vec<_>>>()?;
    let histograms = descriptors
        .iter()
        .map(|d| ex.histogram_of(d, &codebook))
        .collect::<Result<Vec<_>>>()?;
    drop(ex);
    if fit {
        bundle.pca = Some(pca);
        bundle.codebook = Some(codebook);
    }
    Ok(Features {
        descriptors,
        histograms,
        labels: videos.labels().map(<[u32]>::to_vec),
    })
}

/// Write `descriptors.vtb` (videos x super blocks x dims), `histograms.vtb`
/// (videos x words), `labels.vtb` when labelled, and a manifest.
pub fn save_features(dir: &Path, f: &Features, model_kind: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let n = f.descriptors.len();
    let (supers, dims) = f.descriptors.first().map_or((0, 0), |d| (d.rows(), d.cols()));
    Tensor::f64(vec![n, supers, dims], stack(&f.descriptors)?.into_vec())?.write(dir.join("descriptors.vtb"))?;
    let k = f.histograms.first().map_or(0, Histogram::len);
    let hist: Vec<f64> = f.histograms.iter().flat_map(|h| h.weights().iter().copied()).collect();
    Tensor::f64(vec![n, k], hist)?.write(dir.join("histograms.vtb"))?;
    let mut kv = KeyValues::new(dir.join(MANIFEST));
    kv.set("kind", "features");
    kv.set("model", model_kind);
    kv.set("videos", n);
    kv.set("words", k);
    kv.set("labels", f.labels.is_some());
    if let Some(l) = &f.labels {
        Tensor::f64(vec![l.len()], l.iter().map(|&v| f64::from(v)).collect())?.write(dir.join("labels.vtb"))?;
    }
    kv.write(dir.join(MANIFEST))
}

/// Histograms and labels written by [`save_features`].
pub fn load_features(dir: &Path) -> Result<(Vec<Histogram>, Vec<u32>)> {
    let kv = KeyValues::read(dir.join(MANIFEST))?;
    if kv.get("kind")? != "features" {
        return Err(kv.error(kv.line_of("kind"), "not a feature directory written by extract"));
    }
    let t = Tensor::read(dir.join("histograms.vtb"))?;
    let [n, k] = t.dims() else {
        return Err(Error::Format(format!("histograms.vtb must be 2-D, got {:?}", t.dims())));
    };
    let (n, k) = (*n, *k);
    let values = t.to_f64();
    let hists = values
        .chunks(k.max(1))
        .take(n)
        .map(Histogram::from_counts)
        .collect::<Result<Vec<_>>>()?;
    if !kv.parse_value::<bool>("labels")? {
        return Err(Error::InvalidArgument(format!("{} has no labels to evaluate against", dir.display())));
    }
    let labels: Vec<u32> = Tensor::read(dir.join("labels.vtb"))?
        .to_f64()
        .into_iter()
        .map(|v| v as u32)
        .collect();
    if labels.len() != hists.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} histograms in {}",
            labels.len(),
            hists.len(),
            dir.display()
        )));
    }
    Ok((hists, labels))
}

/// Evaluation outcome plus the χ² kernels (`gamma` = mean training
/// distance) for use with an external SVM.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub gamma: f64,
    pub train_kernel: RowMatrix,
    pub test_kernel: Option<RowMatrix>,
}

pub fn evaluate(train: &(Vec<Histogram>, Vec<u32>), test: Option<&(Vec<Histogram>, Vec<u32>)>, cfg: &RunConfig) -> Result<Evaluation> {
    let (th, tl) = train;
    let gamma = mean_pairwise_distance(th)?;
    let train_kernel = kernel_matrix(th, th, gamma)?;
    match test {
        Some((eh, el)) => Ok(Evaluation {
            report: evaluate_split(th, tl, eh, el, cfg.knn_k)?,
            gamma,
            train_kernel,
            test_kernel: Some(kernel_matrix(eh, th, gamma)?),
        }),
        None => Ok(Evaluation {
            report: evaluate_loo(th, tl, cfg.knn_k)?,
            gamma,
            train_kernel,
            test_kernel: None,
        }),
    }
}

/// `predictions.csv`, `confusion.csv`, `summary.csv` and kernel VTBs.
pub fn save_evaluation(dir: &Path, ev: &Evaluation, protocol: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    write_text(&dir.join("predictions.csv"), &ev.report.predictions_csv())?;
    write_text(&dir.join("confusion.csv"), &ev.report.confusion_csv())?;
    let summary = format!(
        "protocol,items,accuracy,gamma\n{protocol},{},{:?},{:?}\n",
        ev.report.predictions.len(),
        ev.report.accuracy,
        ev.gamma
    );
    write_text(&dir.join("summary.csv"), &summary)?;
    Tensor::from_matrix(&ev.train_kernel).write(dir.join("kernel_train.vtb"))?;
    if let Some(k) = &ev.test_kernel {
        Tensor::from_matrix(k).write(dir.join("kernel_test.vtb"))?;
    }
    Ok(())
}

/// Filter mosaic, or the pooling-group mosaic when `pooling_videos` is
/// given (group membership is counted over those videos' sub blocks).
pub fn viz_filters(bundle: &ModelBundle, pooling_videos: Option<&PatchDataset>, cfg: &RunConfig) -> Result<viz::GreyImage> {
    match pooling_videos {
        None => viz::filter_mosaic(bundle, cfg.viz_gap),
        Some(videos) => {
            check_pipeline_model(bundle)?;
            let whitening = require_whitening(bundle)?;
            let ex = DescriptorExtractor::new(bundle.model.encoder(), whitening, cfg.descriptor())?;
            let seed = rng::derive(cfg.seed, STREAM_POOLING);
            let hiddens = pooling_hiddens(&ex, bundle, videos, cfg.pooling_samples, seed)?;
            Ok(viz::pooling_mosaic(bundle, &hiddens, cfg.viz_gap)?.0)
        }
    }
}
