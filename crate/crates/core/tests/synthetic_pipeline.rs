use toolweave::eval::{run_ablation, score_dependencies, AblationInputs, EvalConfig};
use toolweave::extract::{run_extraction, ExtractionConfig};
use toolweave::gateway::Gateway;
use toolweave::graph::{build_tool_graph, fuse, ingest_document_graph, HeuristicExtractor};
use toolweave::plan::GenerationConfig;
use toolweave::retrieval::index_graph;
use toolweave::synth::{generate_corpus, scripted_gateway, CorpusSpec};

#[test]
fn stub_extraction_recovers_plants_exactly() {
    let corpus = generate_corpus(&CorpusSpec::default()).unwrap();
    for max_in_flight in [1, 8] {
        let cfg = ExtractionConfig {
            max_in_flight,
            ..ExtractionConfig::default()
        };
        let run = run_extraction(corpus.tools.tools(), &cfg, &Gateway::stub()).unwrap();
        let r = score_dependencies(&run.accepted_pairs(), &corpus.gold_dependencies);
        assert_eq!(
            (r.precision, r.recall),
            (1.0, 1.0),
            "max_in_flight={max_in_flight}"
        );
    }
}

#[test]
fn ppr_ablation_replays_and_favors_ppr() {
    let spec = CorpusSpec::default();
    let corpus = generate_corpus(&spec).unwrap();
    let stub = Gateway::stub();
    let deps = run_extraction(corpus.tools.tools(), &ExtractionConfig::default(), &stub).unwrap();
    let tool_graph = build_tool_graph(corpus.tools.tools(), &deps.dependencies).unwrap();
    let doc_graph = ingest_document_graph(&corpus.docs, &HeuristicExtractor).unwrap();
    let graph = fuse(&tool_graph, &doc_graph).unwrap();
    let store = index_graph(&graph, &stub).unwrap();

    let recorder = scripted_gateway(&corpus.queries).unwrap();
    let retrieval = spec.retrieval_config();
    let (generation, eval) = (GenerationConfig::default(), EvalConfig::default());
    let inputs = |gateway| AblationInputs {
        queries: &corpus.queries,
        graph: &graph,
        store: &store,
        tools: &corpus.tools,
        gateway,
    };
    let recorded = run_ablation(&inputs(&recorder), &retrieval, &generation, &eval).unwrap();
    let fixtures = recorder.recorded().unwrap();

    let replay = Gateway::replay(fixtures);
    let replayed = run_ablation(&inputs(&replay), &retrieval, &generation, &eval).unwrap();
    assert_eq!(replayed.report, recorded.report);
    let r = &replayed.report;
    eprintln!(
        "with={} without={} delta={} won={:?} lost={:?}",
        r.with_ppr.binary_match_accuracy,
        r.without_ppr.binary_match_accuracy,
        r.accuracy_delta,
        r.won,
        r.lost
    );
    assert!(r.accuracy_delta >= 0.10);
    for s in &corpus.scenarios {
        assert!(r.won.contains(&s.query_id));
    }
}
