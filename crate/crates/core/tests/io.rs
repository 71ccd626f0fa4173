use optiflow::io::*;
use optiflow::pipeline::{fixed_point_transport, SolverConfig};
use optiflow::{Grid2D, ScalarField};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn csv_round_trip_is_bitwise(values in prop::collection::vec(-1e6f64..1e6, 20), scale in 1e-300f64..1e300) {
        let grid = Grid2D::new(4, 3, [-1.0, 3.0], [0.5, 2.0]).unwrap();
        let f = ScalarField::new(grid, values.iter().map(|v| v * scale / 1e6).collect()).unwrap();
        let back = field_from_csv(&field_to_csv(&f), &grid).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn pgm_round_trip(pixels in prop::collection::vec(0u16..=65535, 12), plain in any::<bool>()) {
        let img = PgmImage { width: 4, height: 3, maxval: 65535, pixels };
        let bytes = if plain { img.to_p2() } else { img.to_p5() };
        prop_assert_eq!(PgmImage::parse(&bytes).unwrap(), img.clone());
        let field = img.to_field(0.05, 1.05).unwrap();
        prop_assert!(field.min() >= 0.05 && field.max() <= 1.05);
        prop_assert_eq!(PgmImage::from_field(&field, 0.05, 1.05, 65535).unwrap(), img);
    }
}

#[test]
fn frames_of_a_trivial_run_are_identical() {
    let grid = Grid2D::unit_square(5).unwrap();
    let img = ScalarField::from_fn(grid, |x, y| 1.0 + 0.25 * x * y);
    let sol = fixed_point_transport(&img, &img, &SolverConfig { nt: 12, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = save_frames(&sol.rho, dir.path(), FrameFormat::Csv).unwrap();
    assert_eq!(paths.len(), 13);
    assert!(paths[0].ends_with("frame_000.csv") && paths[12].ends_with("frame_012.csv"));
    let first = std::fs::read(&paths[0]).unwrap();
    for p in &paths {
        assert_eq!(std::fs::read(p).unwrap(), first);
    }
    let back = field_from_csv(std::str::from_utf8(&first).unwrap(), &grid).unwrap();
    assert_eq!(back, img);
}

#[test]
fn sixty_element_run_names_sixty_one_frames() {
    let names: Vec<String> = (0..=60).map(|k| frame_name(k, 60)).collect();
    assert_eq!(names.first().unwrap(), "frame_000");
    assert_eq!(names.last().unwrap(), "frame_060");
}

#[test]
fn solution_file_round_trip() {
    let grid = Grid2D::unit_square(4).unwrap();
    let r0 = ScalarField::from_fn(grid, |x, _| 1.0 + 0.1 * x);
    let r1 = ScalarField::from_fn(grid, |_, y| 1.0 + 0.1 * y);
    let sol = fixed_point_transport(&r0, &r1, &SolverConfig { nt: 4, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("solution.json");
    SolutionFile::from_solution(&sol).write(&path).unwrap();
    let back = SolutionFile::read(&path).unwrap().into_solution().unwrap();
    assert_eq!(back.rho, sol.rho);
    assert_eq!(back.velocity, sol.velocity);
    assert_eq!(back.potential, sol.potential);
    assert_eq!(back.report, sol.report);
}

#[test]
fn missing_file_error_names_the_path() {
    let err = load_pgm("/nonexistent/dir/img.pgm", 0.05, 1.05).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir/img.pgm"), "{err}");
}
