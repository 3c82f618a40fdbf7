use std::fs;
use std::path::{Path, PathBuf};

use aesthetic_captcha::pool::{transform, ImagePool, PoolError, PoolStats, SharedPool, TransformSeed, Valence};

fn fixture_manifest() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pool/manifest.json")
}

#[test]
fn fixture_manifest_counts() {
    // Count straight from the JSON, independent of the loader.
    let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(fixture_manifest()).unwrap()).unwrap();
    let images = raw["images"].as_array().unwrap();
    let count = |v: &str| images.iter().filter(|e| e["valence"] == v).count();
    let expected = PoolStats {
        m: images.len(),
        p: count("pleasing"),
        d: count("displeasing"),
    };
    assert_eq!(expected, PoolStats { m: 200, p: 100, d: 100 });

    let shared = SharedPool::default();
    assert_eq!(shared.ingest_manifest(&fixture_manifest()).unwrap(), expected);
    assert_eq!(shared.stats(), expected);
    assert_eq!(shared.snapshot().categories().count(), 5);
}

fn write_manifest(dir: &Path, images: serde_json::Value) -> PathBuf {
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::json!({"version": 1, "images": images}).to_string()).unwrap();
    path
}

fn entry(id: &str, path: &str, valence: &str) -> serde_json::Value {
    serde_json::json!({
        "id": id, "path": path, "category": "cars", "valence": valence,
        "source_url": "https://example.org", "license": "CC0-1.0"
    })
}

fn copy_fixture_image(dir: &Path, name: &str) {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pool/cars-pleasing-00.png");
    fs::copy(src, dir.join(name)).unwrap();
}

#[test]
fn empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(dir.path(), serde_json::json!([]));
    let pool = ImagePool::load_manifest(&path).unwrap();
    assert_eq!(pool.stats(), PoolStats { m: 0, p: 0, d: 0 });
}

#[test]
fn duplicate_id_rejected() {
    let dir = tempfile::tempdir().unwrap();
    copy_fixture_image(dir.path(), "a.png");
    let path = write_manifest(
        dir.path(),
        serde_json::json!([entry("x", "a.png", "pleasing"), entry("x", "a.png", "displeasing")]),
    );
    assert!(matches!(ImagePool::load_manifest(&path), Err(PoolError::DuplicateId(id)) if id == "x"));
}

#[test]
fn missing_image_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(dir.path(), serde_json::json!([entry("x", "nope.png", "pleasing")]));
    assert!(matches!(
        ImagePool::load_manifest(&path),
        Err(PoolError::MissingImage { .. })
    ));
}

#[test]
fn undecodable_image_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("junk.png"), b"this is not an image").unwrap();
    let path = write_manifest(dir.path(), serde_json::json!([entry("x", "junk.png", "pleasing")]));
    assert!(matches!(
        ImagePool::load_manifest(&path),
        Err(PoolError::UndecodableImage { .. })
    ));
}

#[test]
fn malformed_manifest_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    fs::write(&path, "{\"version\": 1, \"images\": [").unwrap();
    assert!(matches!(ImagePool::load_manifest(&path), Err(PoolError::Parse(_))));
}

#[test]
fn reingest_swaps_whole_pool() {
    let dir = tempfile::tempdir().unwrap();
    copy_fixture_image(dir.path(), "a.png");
    let path = write_manifest(dir.path(), serde_json::json!([entry("x", "a.png", "displeasing")]));
    let shared = SharedPool::default();
    shared.ingest_manifest(&fixture_manifest()).unwrap();
    let before = shared.snapshot();
    assert_eq!(shared.ingest_manifest(&path).unwrap(), PoolStats { m: 1, p: 0, d: 1 });
    // Readers holding the old snapshot keep a consistent view.
    assert_eq!(before.stats().m, 200);
    assert_eq!(
        shared.snapshot().records().next().unwrap().valence,
        Valence::Displeasing
    );
}

#[test]
fn transform_handles_png_and_jpeg_fixtures() {
    let pool = ImagePool::load_manifest(&fixture_manifest()).unwrap();
    let mut formats = std::collections::BTreeSet::new();
    for record in pool.records().take(20) {
        let raw = fs::read(&record.bytes_ref).unwrap();
        let out = transform(&raw, TransformSeed(42)).unwrap();
        assert_eq!(out, transform(&raw, TransformSeed(42)).unwrap());
        assert_ne!(out, transform(&raw, TransformSeed(43)).unwrap());
        formats.insert(record.bytes_ref.extension().unwrap().to_string_lossy().into_owned());
    }
    assert_eq!(formats.len(), 2, "fixtures cover both formats: {formats:?}");
}
