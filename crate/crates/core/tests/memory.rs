use qvs_core::memory::{
    flash_attention_activation_bytes, grouped_flash_attention_bytes, grouped_swiglu_bytes, kv_cache_bytes,
    raw_video_bytes, swiglu_activation_bytes, to_gb, to_gib, MemoryParams, MemoryReport,
};

fn hour() -> MemoryParams {
    MemoryParams::internvl25_8b_1h()
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target
}

#[test]
fn exact_byte_counts() {
    let cache = MemoryParams {
        seq_len: 921_600 + 256,
        ..hour()
    };
    assert_eq!(kv_cache_bytes(&cache), 2 * 28 * 921_856 * 8 * 512 * 2);
    assert_eq!(flash_attention_activation_bytes(&hour()), 22_666_018_816);
    assert_eq!(swiglu_activation_bytes(&hour()), 120_795_955_200);
    assert_eq!(raw_video_bytes(3600, 800, 1920), 16_588_800_000);
}

#[test]
fn headline_sizes() {
    let kv = kv_cache_bytes(&MemoryParams {
        seq_len: 921_600 + 256,
        ..hour()
    });
    assert!(within(to_gib(kv as f64), 393.9, 0.005));
    assert!(within(to_gib(flash_attention_activation_bytes(&hour()) as f64), 21.1, 0.005));
    assert!(within(to_gib(swiglu_activation_bytes(&hour()) as f64), 112.5, 0.005));
    let grouped = MemoryParams {
        groups: Some(225),
        ..hour()
    };
    assert!(within(to_gib(grouped_swiglu_bytes(&grouped)), 0.5, 0.005));
    let attn = to_gib(grouped_flash_attention_bytes(&grouped));
    assert!(within(attn, 21.1 / 225.0, 0.005));
    assert_eq!(format!("{attn:.2}"), "0.09");
    assert!(within(to_gb(raw_video_bytes(3600, 800, 1920) as f64), 16.6, 0.005));
}

#[test]
fn report_uses_prompt_for_cache_only() {
    let r = MemoryReport::new(hour(), 256).unwrap();
    assert_eq!(r.attention_bytes, flash_attention_activation_bytes(&hour()));
    assert!(r.kv_cache_bytes > kv_cache_bytes(&hour()));
    assert!(r.to_string().contains("kv cache"));
}
