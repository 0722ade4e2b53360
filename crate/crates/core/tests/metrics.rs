use std::collections::BTreeMap;
use std::path::Path;

use motionedit_core::metrics::*;
use motionedit_core::pipeline::EditType;
use motionedit_core::scene::{Canvas, PaletteColor, SceneSpec, ShapeKind, Style};
use motionedit_core::{Error, Result, VideoTensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scene(shape_color: PaletteColor) -> SceneSpec {
    SceneSpec {
        shape: ShapeKind::Circle,
        shape_color,
        background: PaletteColor::Blue,
        size: 14,
        start: [24.0, 30.0],
        velocity: [2.0, 0.0],
        style: Style::Plain,
    }
}

fn render(s: &SceneSpec) -> VideoTensor {
    s.render(&Canvas::default()).unwrap()
}

/// Embeds a clip as its mean pixel value along one axis; used for orthogonality.
struct AxisBackend;

impl EmbeddingBackend for AxisBackend {
    fn name(&self) -> &'static str {
        "axis"
    }
    fn dim(&self) -> usize {
        2
    }
    fn embed_video(&self, v: &VideoTensor) -> Result<Vec<f64>> {
        Ok(if v.frames()[[0, 0, 0, 0]] > 0.5 {
            vec![1.0, 0.0]
        } else {
            vec![0.0, 1.0]
        })
    }
    fn embed_text(&self, _: &str) -> Result<Vec<f64>> {
        Ok(vec![1.0, 0.0])
    }
}

#[test]
fn similarity_examples() {
    let a = render(&scene(PaletteColor::Red));
    let b = render(&scene(PaletteColor::Yellow));
    assert!((m_sim(&a, &a, &OracleEmbedder).unwrap() - 1.0).abs() < 1e-12);
    // five active blocks, one differs
    assert!((m_sim(&a, &b, &OracleEmbedder).unwrap() - 0.8).abs() < 1e-12);
    let white = VideoTensor::new(ndarray::Array4::ones((1, 3, 2, 2)), 8.0).unwrap();
    let black = VideoTensor::new(ndarray::Array4::zeros((1, 3, 2, 2)), 8.0).unwrap();
    assert_eq!(m_sim(&white, &black, &AxisBackend).unwrap(), 0.0);
    for backend in [
        &OracleEmbedder as &dyn EmbeddingBackend,
        &FrameAverageEmbedder::new(FramePooling::AverageEmbeddings),
        &FrameAverageEmbedder::new(FramePooling::AverageScores),
    ] {
        assert_eq!(
            m_sim(&a, &b, backend).unwrap(),
            m_sim(&b, &a, backend).unwrap(),
            "{}",
            backend.name()
        );
        let e = backend.embed_video(&a).unwrap();
        assert!((dot(&e, &e).unwrap() - 1.0).abs() < 1e-6);
        let t = backend
            .embed_text(&scene(PaletteColor::Red).prompt().to_string())
            .unwrap();
        assert_eq!(t.len(), backend.dim());
        assert!((dot(&t, &t).unwrap() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn frame_pooling_modes_differ_only_in_similarity() {
    let a = render(&scene(PaletteColor::Red));
    let b = render(&scene(PaletteColor::Cyan));
    let mean = FrameAverageEmbedder::new(FramePooling::AverageEmbeddings);
    let scores = FrameAverageEmbedder::new(FramePooling::AverageScores);
    assert_eq!(
        mean.embed_video(&a).unwrap(),
        scores.embed_video(&a).unwrap()
    );
    let s1 = mean.video_similarity(&a, &b).unwrap();
    let s2 = scores.video_similarity(&a, &b).unwrap();
    assert!(s1.is_finite() && s2.is_finite() && s2 <= s1 + 1e-12);
}

#[test]
fn direction_examples() {
    // a blue shape on a blue background is invisible, so use a yellow background
    let src = SceneSpec {
        background: PaletteColor::Yellow,
        ..scene(PaletteColor::Red)
    };
    let blue = SceneSpec {
        background: PaletteColor::Yellow,
        ..scene(PaletteColor::Blue)
    };
    let green = SceneSpec {
        background: PaletteColor::Yellow,
        ..scene(PaletteColor::Green)
    };
    let (sp2, ep2) = (src.prompt().to_string(), blue.prompt().to_string());
    let right = m_dir(&render(&src), &render(&blue), &sp2, &ep2, &OracleEmbedder).unwrap();
    assert!((right - 1.0).abs() < 1e-12);
    // deltas (blue - red) and (green - red) share the red component: cosine 1/2
    let wrong = m_dir(&render(&src), &render(&green), &sp2, &ep2, &OracleEmbedder).unwrap();
    assert!((wrong - 0.5).abs() < 1e-12, "{wrong}");
    let a = render(&src);
    assert_eq!(m_dir(&a, &a, &sp2, &ep2, &OracleEmbedder).unwrap(), 0.0);
    assert_eq!(
        m_dir(&render(&src), &render(&blue), &sp2, &sp2, &OracleEmbedder).unwrap(),
        0.0
    );
    assert!(matches!(
        direction_cosine(&[0.0], &[1.0, 0.0], &[0.0], &[1.0]),
        Err(Error::DimensionMismatch(1, 2))
    ));
}

#[test]
fn geometric_mean_rules() {
    assert_eq!(m_geo(0.25, 0.04), 0.1);
    assert_eq!(m_geo(1.0, 1.0), 1.0);
    assert_eq!(m_geo(0.7, 0.0), 0.0);
    assert_eq!(m_geo(0.7, -0.3), 0.0);
}

fn random_rotation(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        for u in &q {
            let d = dot(&v, u).unwrap();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = dot(&v, &v).unwrap().sqrt();
        if norm > 1e-6 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    q
}

#[test]
fn direction_cosine_is_rotation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let canvas = Canvas::default();
    for _ in 0..20 {
        let s0 = SceneSpec::random(&mut rng, &canvas, None);
        let s1 = SceneSpec::random(&mut rng, &canvas, None);
        let e = [
            OracleEmbedder.embed_video(&render(&s0)).unwrap(),
            OracleEmbedder.embed_video(&render(&s1)).unwrap(),
            OracleEmbedder.embed_text(&s0.prompt().to_string()).unwrap(),
            OracleEmbedder.embed_text(&s1.prompt().to_string()).unwrap(),
        ];
        let q = random_rotation(OracleCode::DIM, &mut rng);
        let rot: Vec<Vec<f64>> = e
            .iter()
            .map(|v| q.iter().map(|row| dot(row, v).unwrap()).collect())
            .collect();
        let before = direction_cosine(&e[0], &e[1], &e[2], &e[3]).unwrap();
        let after = direction_cosine(&rot[0], &rot[1], &rot[2], &rot[3]).unwrap();
        assert!((before - after).abs() < 1e-12, "{before} vs {after}");
    }
}

proptest! {
    #[test]
    fn geo_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, da in 0.0f64..1.0, db in 0.0f64..1.0) {
        prop_assert!(m_geo(a + da, b) >= m_geo(a, b));
        prop_assert!(m_geo(a, b + db) >= m_geo(a, b));
    }

    #[test]
    fn spearman_is_bounded(x in proptest::collection::vec(-5i32..5, 3..12), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|_| rng.random_range(0..4) as f64).collect();
        if let Ok(r) = spearman(&xs, &ys) {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }
}

use Choice::{A, B};
use Reason::{SourceConsistency as Cons, TextAlignment as Align};

#[test]
fn majority_examples() {
    let v = |c, r: &[Reason]| Vote::new(c, r);
    let out = majority_vote(&[
        v(A, &[Align]),
        v(A, &[Align]),
        v(A, &[Cons]),
        v(B, &[Align]),
        v(B, &[Cons]),
    ])
    .unwrap();
    assert_eq!(out.winner, A);
    let out = majority_vote(&[
        v(A, &[Align]),
        v(A, &[Align, Cons]),
        v(A, &[Cons]),
        v(B, &[Align]),
        v(B, &[Align]),
    ])
    .unwrap();
    assert_eq!(out.winner, A);
    assert_eq!(out.reasons.text_alignment, 1.0 / 3.0);
    assert_eq!(out.reasons.source_consistency, 1.0 / 3.0);
    assert_eq!(out.reasons.both, 1.0 / 3.0);
    let out = majority_vote(&[v(B, &[Align])]).unwrap();
    assert_eq!((out.winner, out.reasons.text_alignment), (B, 1.0));
    assert!(matches!(
        majority_vote(&[v(A, &[Align]), v(B, &[Cons])]),
        Err(Error::EvenVoteCount(2))
    ));
    assert!(matches!(majority_vote(&[]), Err(Error::EvenVoteCount(0))));
}

fn comparison(id: &str, sa: f64, sb: f64, winner: Choice) -> PairedComparison {
    PairedComparison {
        task_id: id.into(),
        method_a: "x".into(),
        method_b: "y".into(),
        scores_a: [("m_geo".to_string(), sa)].into(),
        scores_b: [("m_geo".to_string(), sb)].into(),
        votes: vec![Vote::new(winner, &[Align]); 3],
    }
}

#[test]
fn accuracy_counting_and_ties() {
    let types: BTreeMap<String, EditType> = [
        ("t0".to_string(), EditType::Style),
        ("t1".to_string(), EditType::Motion),
    ]
    .into();
    let cs = vec![
        comparison("t0", 0.9, 0.1, A),
        comparison("t1", 0.2, 0.4, B),
        comparison("t2", 0.3, 0.1, A),
        comparison("t3", 0.3, 0.1, B),
    ];
    let acc = metric_classification_accuracy(&cs, "m_geo", &types).unwrap();
    assert_eq!(acc.overall, 0.75);
    assert_eq!(acc.per_type[&EditType::Style], 1.0);
    let ties: Vec<_> = (0..6)
        .map(|i| comparison(&format!("t{i}"), 0.5, 0.5, if i % 2 == 0 { A } else { B }))
        .collect();
    assert_eq!(
        metric_classification_accuracy(&ties, "m_geo", &types)
            .unwrap()
            .overall,
        0.5
    );
    assert!(matches!(
        metric_classification_accuracy(&cs, "m_dir", &types),
        Err(Error::MissingScore(_, _))
    ));
}

#[test]
fn random_metric_is_at_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 10_000;
    let cs: Vec<_> = (0..n)
        .map(|i| {
            let w = if i % 2 == 0 { A } else { B };
            comparison(&i.to_string(), rng.random(), rng.random(), w)
        })
        .collect();
    let acc = metric_classification_accuracy(&cs, "m_geo", &BTreeMap::new())
        .unwrap()
        .overall;
    let sigma = (0.25 / n as f64).sqrt();
    assert!((acc - 0.5).abs() < 3.0 * sigma, "{acc}");
}

/// Rank by counting smaller and equal values; independent of the sort-based ranks.
fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&w| w < v).count() as f64;
            let eq = x.iter().filter(|&&w| w == v).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect()
}

fn oracle_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    let (rx, ry) = (oracle_ranks(x), oracle_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn spearman_examples() {
    assert_eq!(
        spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
        1.0
    );
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    let x = [1.0, 2.0, 2.0, 4.0];
    let y = [1.0, 3.0, 2.0, 4.0];
    assert!((spearman(&x, &y).unwrap() - oracle_spearman(&x, &y).unwrap()).abs() < 1e-12);
    assert!(matches!(
        spearman(&[1.0, 2.0], &[1.0]),
        Err(Error::LengthMismatch(2, 1))
    ));
    assert!(matches!(
        spearman(&[1.0, 1.0], &[1.0, 2.0]),
        Err(Error::UndefinedCorrelation(_))
    ));
}

#[test]
fn spearman_matches_brute_force_on_all_small_permutations() {
    for n in 2..=6 {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        for p in permutations(n) {
            let y: Vec<f64> = p.iter().map(|&i| i as f64).collect();
            let got = spearman(&x, &y).unwrap();
            assert!((got - oracle_spearman(&x, &y).unwrap()).abs() < 1e-12);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let n = rng.random_range(3..=10);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
        match (spearman(&x, &y), oracle_spearman(&x, &y)) {
            (Ok(a), Some(b)) => assert!((a - b).abs() < 1e-12),
            (Err(Error::UndefinedCorrelation(_)), None) => {}
            other => panic!("{other:?}"),
        }
    }
}

fn published_scores() -> ScoreTable {
    ScoreTable::load(
        &Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/published_scores.json"),
    )
    .unwrap()
}

#[test]
fn published_scores_rank_as_printed() {
    let table = published_scores();
    let order: Vec<&str> = table.ranking().into_iter().map(|(m, _)| m).collect();
    assert_eq!(
        order,
        [
            "Ours",
            "VideoComposer",
            "Tune-a-Video",
            "Gen-1",
            "Dreamix",
            "TokenFlow",
            "MasaCtrl"
        ]
    );
    let motion = table.type_ranking(EditType::Motion);
    assert_eq!(motion[0], ("VideoComposer", 0.187));
    assert_eq!(motion[1], ("Ours", 0.185));
}

#[test]
fn report_without_labels_marks_alignment_absent() {
    let report = report_from_scores(
        "oracle",
        published_scores(),
        Some(&[]),
        &BTreeMap::new(),
        vec![],
    )
    .unwrap();
    assert!(report.alignment.is_none());
    let text = report.to_text();
    assert!(text.contains("no labels"));
    assert!(text.lines().nth(2).unwrap().starts_with("Ours"));
    let dir = tempfile::tempdir().unwrap();
    report.write(dir.path()).unwrap();
    for f in ["report.json", "tables.txt", "m_geo.svg"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn report_with_labels_has_alignment_and_reasons() {
    let labels = vec![
        comparison("t0", 0.9, 0.1, A),
        comparison("t1", 0.2, 0.4, B),
        comparison("t2", 0.3, 0.1, A),
    ];
    let report = report_from_scores(
        "oracle",
        published_scores(),
        Some(&labels),
        &BTreeMap::new(),
        vec![],
    )
    .unwrap();
    let rows = report.alignment.as_ref().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].accuracy.overall, 1.0);
    assert_eq!(rows[0].spearman["total"], Some(0.8660254037844387));
    assert_eq!(report.reasons.len(), 2);
}

#[test]
fn labels_loader_reports_the_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("labels.jsonl");
    let good = serde_json::to_string(&comparison("t0", 0.1, 0.2, A)).unwrap();
    let mut even = comparison("t1", 0.1, 0.2, A);
    even.votes.pop();
    let even = serde_json::to_string(&even).unwrap();
    std::fs::write(&p, format!("{good}\n{{oops\n")).unwrap();
    assert!(matches!(
        load_labels(&p),
        Err(Error::Schema { line: 2, .. })
    ));
    std::fs::write(&p, format!("{good}\n\n{even}\n")).unwrap();
    assert!(matches!(
        load_labels(&p),
        Err(Error::Schema { line: 3, .. })
    ));
    std::fs::write(&p, format!("{good}\n")).unwrap();
    assert_eq!(load_labels(&p).unwrap().len(), 1);
}
