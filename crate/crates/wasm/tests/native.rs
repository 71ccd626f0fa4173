use optiflow_wasm::{bump_images_native, Transport};

#[test]
fn bump_images_are_mirrored() {
    let v = bump_images_native(10, 1.0, 1.0).unwrap();
    assert_eq!(v.len(), 2 * 121);
    let (a, b) = v.split_at(121);
    for j in 0..=10 {
        assert_eq!(&a[j * 11..j * 11 + 11], &b[(10 - j) * 11..(10 - j) * 11 + 11]);
    }
    assert!(bump_images_native(100, 1.0, 1.0).is_err());
    assert!(bump_images_native(10, 0.0, 1.0).is_err());
}

#[test]
fn transports_reach_both_images() {
    let imgs = bump_images_native(12, 1.0, 1.0).unwrap();
    for method in ["characteristics", "lsq", "baseline"] {
        let t = Transport::solve(12, 8, 1.0, method).unwrap();
        assert_eq!(t.num_frames(), 9);
        assert_eq!(t.frame(0), imgs[..169]);
        assert_eq!(t.frame(8), imgs[169..]);
        assert!(t.converged(), "{method}");
        assert!(t.mass_drift() < 0.05);
    }
    assert!(Transport::solve(12, 8, 1.0, "magic").is_err());
}

#[test]
fn particle_on_the_axis_moves_towards_the_second_bump() {
    let t = Transport::solve(16, 10, 1.0, "characteristics").unwrap();
    let path = t.path_native(0.0, 0.5).unwrap();
    assert_eq!(path.len(), 22);
    assert_eq!(&path[..2], &[0.0, 0.5]);
    let ys: Vec<f64> = path.chunks(2).map(|p| p[1]).collect();
    assert!(ys.windows(2).all(|w| w[1] < w[0]));
    assert!(ys[10] < 0.49);
    assert!(path.chunks(2).all(|p| p[0].abs() < 1e-9));
}
