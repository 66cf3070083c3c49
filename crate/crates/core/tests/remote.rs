use std::net::TcpListener;
use std::sync::Arc;

use ifedit_core::backends::{
    AnalyticBackend, AnalyticSpec, PredictResponse, RemoteBackend, RemoteConfig,
};
use ifedit_core::harness::synthetic_suite;
use ifedit_core::stub::StubServer;
use ifedit_core::tensor::TemporalMask;
use ifedit_core::{
    BackendConfig, Codec, CodecSpec, Denoiser, DenoiserInput, EditConfig, Editor, Error,
    RetryPolicy, VideoLatent,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn analytic(seed: u64) -> Arc<dyn Denoiser> {
    let codec = Arc::new(Codec::new(CodecSpec::default()).unwrap());
    Arc::new(
        AnalyticBackend::new(
            AnalyticSpec {
                seed,
                ..Default::default()
            },
            codec,
        )
        .unwrap(),
    )
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_retries: 2,
        initial_backoff_ms: 5,
        multiplier: 2.0,
    }
}

fn client(url: &str) -> RemoteBackend {
    let mut cfg = RemoteConfig::new(url);
    cfg.retry = fast_retry();
    cfg.timeout_ms = 2_000;
    RemoteBackend::new(cfg).unwrap()
}

fn random_latent(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> VideoLatent {
    let n = dims.iter().product();
    VideoLatent::new(
        dims,
        (0..n).map(|_| rng.random_range(-2.0f32..2.0)).collect(),
    )
    .unwrap()
}

struct Case {
    z: VideoLatent,
    y: VideoLatent,
    m: TemporalMask,
    emb: Vec<f32>,
    positions: Vec<usize>,
    t: f64,
}

impl Case {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [48, 3, 4, 4];
        Case {
            z: random_latent(&mut rng, dims),
            y: random_latent(&mut rng, dims),
            m: TemporalMask::first_observed(3, 4, 4).unwrap(),
            emb: (0..64).map(|_| rng.random_range(-1.0..1.0)).collect(),
            positions: vec![0, 3, 8],
            t: rng.random_range(0.05..1.0),
        }
    }

    fn input(&self) -> DenoiserInput<'_> {
        DenoiserInput {
            z: &self.z,
            y: &self.y,
            m: &self.m,
            t: self.t,
            embedding: &self.emb,
            positions: &self.positions,
        }
    }
}

fn dead_url() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}")
}

#[test]
fn remote_predict_is_bit_identical_to_local() {
    let local = analytic(9);
    let server = StubServer::predict(local.clone()).unwrap();
    let remote = client(server.url());
    for seed in 0..5 {
        let case = Case::new(seed);
        let a = local.predict(&case.input()).unwrap();
        let b = remote.predict(&case.input()).unwrap();
        assert_eq!(a, b);
    }
    assert_eq!(server.hits(), 5);
}

#[test]
fn remote_pipeline_matches_in_process() {
    let cfg = EditConfig {
        seed: 17,
        ..Default::default()
    };
    let server = StubServer::predict(analytic(cfg.seed)).unwrap();
    let remote_cfg = EditConfig {
        backend: BackendConfig::Remote {
            url: Some(server.url().to_string()),
            timeout_ms: Some(5_000),
            retry: fast_retry(),
        },
        ..cfg.clone()
    };
    let scene = synthetic_suite(1, 32, 4).remove(0);
    let a = Editor::new(cfg)
        .unwrap()
        .edit(&scene.image, &scene.instruction)
        .unwrap();
    let b = Editor::new(remote_cfg)
        .unwrap()
        .edit(&scene.image, &scene.instruction)
        .unwrap();
    assert_eq!(a.output, b.output);
    assert_eq!(a.final_latent, b.final_latent);
    assert_eq!(server.hits(), 12);
}

#[test]
fn wrong_dims_is_a_contract_error() {
    let server = StubServer::serve(
        "127.0.0.1:0",
        Arc::new(|_: &str, _: &str| {
            let x0 = VideoLatent::zeros([48, 1, 4, 4]).unwrap();
            (
                200,
                serde_json::to_string(&PredictResponse::from_latent(&x0)).unwrap(),
            )
        }),
    )
    .unwrap();
    let case = Case::new(1);
    match client(server.url()).predict(&case.input()) {
        Err(Error::Contract { expected, actual }) => {
            assert_eq!(expected, vec![48, 3, 4, 4]);
            assert_eq!(actual, vec![48, 1, 4, 4]);
        }
        other => panic!("expected contract error, got {other:?}"),
    }
    assert_eq!(server.hits(), 1);
}

#[test]
fn server_errors_are_retried_then_reported() {
    let server = StubServer::serve(
        "127.0.0.1:0",
        Arc::new(|_: &str, _: &str| (503, "{}".to_string())),
    )
    .unwrap();
    let case = Case::new(2);
    match client(server.url()).predict(&case.input()) {
        Err(Error::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected transport error, got {other:?}"),
    }
    assert_eq!(server.hits(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = StubServer::serve(
        "127.0.0.1:0",
        Arc::new(|_: &str, _: &str| (400, "{}".to_string())),
    )
    .unwrap();
    let case = Case::new(3);
    assert!(matches!(
        client(server.url()).predict(&case.input()),
        Err(Error::Protocol(_))
    ));
    assert_eq!(server.hits(), 1);
}

#[test]
fn garbage_body_is_a_protocol_error() {
    let server = StubServer::serve(
        "127.0.0.1:0",
        Arc::new(|_: &str, _: &str| (200, "{\"x0\": \"!!\"}".to_string())),
    )
    .unwrap();
    let case = Case::new(4);
    assert!(matches!(
        client(server.url()).predict(&case.input()),
        Err(Error::Protocol(_))
    ));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let case = Case::new(5);
    match client(&dead_url()).predict(&case.input()) {
        Err(Error::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected transport error, got {other:?}"),
    }
}

#[test]
fn stub_rejects_bad_requests() {
    let server = StubServer::predict(analytic(0)).unwrap();
    let http = reqwest::blocking::Client::new();
    let bad = http
        .post(format!("{}/v1/predict", server.url()))
        .body("{")
        .send()
        .unwrap();
    assert_eq!(bad.status().as_u16(), 400);
    let missing = http
        .post(format!("{}/v2/other", server.url()))
        .body("{}")
        .send()
        .unwrap();
    assert_eq!(missing.status().as_u16(), 404);
}
