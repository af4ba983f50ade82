#![no_main]

use libfuzzer_sys::fuzz_target;
use trimodal::metrics::parse_obj;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mesh) = parse_obj(text, "fuzz") {
        for t in &mesh.triangles {
            for &i in t {
                assert!(i < mesh.vertices.len());
            }
        }
        let _ = mesh.validate();
    }
});
