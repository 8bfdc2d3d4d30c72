"""Language-assessment pipeline engine.

Modules:
    text        -- tokenization, sentence splitting, IDF, n-gram LMs, LSA embeddings
    features    -- writing-sample feature extraction (content / coherence / lexis / grammar)
    scoring     -- rating ingestion, gradient-boosted scorer, Shapley explanations, CEFR bands
    fairness    -- representation reports, DIF (Mantel-Haenszel + logistic), DRF regression
    generation  -- passage and item generation through a pluggable text-model provider
    plagiarism  -- winnowing fingerprint index, overlap scan, flag classification
    review      -- FAB/IQR review queues, proctor adjudication, feedback reports, ECP records
    monitor     -- weekly quality windows, population-stability index, alert rules
    store       -- append-only entity store with snapshots
    runtime     -- platform wiring (resources, bootstrap, operations)
    api / cli   -- HTTP service and command-line front ends
"""

__version__ = "0.1.0"
