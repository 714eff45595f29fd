macro_rules! example_test {
    ($module:ident, $test:ident, $file:literal) => {
        #[path = $file]
        mod $module;

        #[test]
        fn $test() {
            $module::run_example().expect(concat!($file, " should run"));
        }
    };
}

example_test!(excerpts, excerpts_example_runs, "../examples/excerpts.rs");
example_test!(sentence_weighting, sentence_weighting_example_runs, "../examples/sentence_weighting.rs");
example_test!(pert_windows, pert_windows_example_runs, "../examples/pert_windows.rs");
example_test!(semb_and_pca, semb_and_pca_example_runs, "../examples/semb_and_pca.rs");
example_test!(alignment, alignment_example_runs, "../examples/alignment.rs");
example_test!(attention_classifier, attention_classifier_example_runs, "../examples/attention_classifier.rs");
example_test!(gradient_check, gradient_check_example_runs, "../examples/gradient_check.rs");
example_test!(pipeline, pipeline_example_runs, "../examples/pipeline.rs");
