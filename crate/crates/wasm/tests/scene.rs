use compfilter_wasm::{preset_names, Scene};

#[test]
fn scene_renders_rgba_buffers() {
    let scene = Scene::new(24, 16, 3, 25.0).unwrap();
    let clean = scene.clean();
    assert_eq!(clean.rgba.len(), 24 * 16 * 4);
    assert!(clean.rgba.chunks(4).all(|px| px[3] == 255));
    assert_eq!(clean.psnr, 100.0);
    let noisy = scene.noisy();
    assert!(noisy.psnr < 30.0);
    assert!(Scene::new(4, 4, 0, 25.0).is_err());
}

#[test]
fn filtering_reduces_noise_and_rejects_bad_configs() {
    let scene = Scene::new(32, 24, 1, 30.0).unwrap();
    let out = scene.filter("bilateral:ss=2,sr=0.3,k=7").unwrap();
    assert!(out.psnr > scene.noisy().psnr);
    assert_eq!(out.detail, "bilateral:ss=2,sr=0.3,k=7");
    assert!(scene.filter("median:2x2").is_err());
    assert!(scene.filter("sharpen").is_err());
}

#[test]
fn composition_beats_the_noisy_input() {
    let scene = Scene::new(24, 24, 2, 25.0).unwrap();
    let out = scene.compose("median8", 10).unwrap();
    assert!(out.psnr > scene.noisy().psnr, "{} vs {}", out.psnr, scene.noisy().psnr);
    assert!(out.detail.contains("8 basis planes"));
    assert!(scene.compose("nope", 5).is_err());
    assert!(preset_names().contains(&"bilateral-iis9".to_string()));
}
