use streamcap::memory::{MemoryConfig, StreamMemory};
use streamcap::sim;

#[test]
fn debug_seed0() {
    let spec = sim::planted_spec(0, 64, 4, 8, 5, 0.05).unwrap();
    println!("events: {:?}", spec.events);
    let radius = sim::detection_radius(&spec);
    println!("radius: {radius}");
    let (stream, _gt) = sim::gen_stream(&spec).unwrap();
    let cfg = MemoryConfig::clustering(16, 2);
    let mut mem = StreamMemory::new(cfg);
    for (idx, frame) in stream.frames.iter().enumerate() {
        mem.push(frame).unwrap();
        let frame_no = idx + 1;
        if frame_no == 32 || frame_no == 40 || frame_no == 64 {
            let state = mem.state().unwrap();
            println!("--- frame {frame_no} (fallbacks {})", state.fallback_frames);
            for (ci, c) in spec.concepts.iter().enumerate() {
                let mut best = f64::INFINITY;
                let mut bw = 0.0f32;
                for (row, w) in state.centers.rows().into_iter().zip(&state.weights) {
                    let d: f64 = row
                        .iter()
                        .zip(c.iter())
                        .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    if d < best {
                        best = d;
                        bw = *w;
                    }
                }
                println!("concept {ci}: nearest center at {best:.3} (weight {bw:.1})");
            }
        }
    }
}
