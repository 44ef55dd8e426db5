"""Offline biomedical entity linking over a prototype embedding space.

Pipeline: load an ontology snapshot, embed every active alias into a flat
unit-norm matrix, retrieve top-k candidates per mention by exact cosine
search, disambiguate them with parametric or semantic-metadata reranking,
and evaluate with retrieval metrics plus article-level semantic similarity.
"""

from .context import (AttentionTensor, MentionSpan, SyntheticContextProvider, attention_enrich,
                      implicit_query, load_attention, load_stopwords, neighboring_context,
                      sort_mcbl, write_attention)
from .corpus import Article, CorpusError, expand_abbreviations, load_abbreviations, load_corpus
from .encoding import (EmbeddingStore, FormatError, TokenEncodings, TrigramHashEncoder,
                       load_embeddings, load_token_encodings, mean_pool, reference_encode,
                       write_embeddings, write_token_encodings)
from .evaluation import (ArticleSimRecord, BucketStats, EvalReport, LinkResult, MatchOutcome,
                         Outcome, OverlappingSpansError, TransitionMatrix, article_similarity,
                         classify_matches, recall_at, recall_within_candidates, select_regions,
                         substituted_texts, summarize, transition_heatmap, wordcount_buckets)
from .index import (Candidate, CandidateSet, PrototypeIndex, SpaceBuildError, build_space,
                    canonical_order, dedup_entities)
from .ontology import (DuplicateCuiError, Entity, EntityStatus, MalformedRecordError,
                       MergeCycleError, MergeTargetError, OntologyError, OntologySnapshot,
                       RelationTable, UnknownCuiError, is_related, load_ontology, load_relations,
                       resolve_cui)
from .rerank import (DEFAULT_GRID_A, DEFAULT_GRID_B, DEFAULT_GRID_C, DEFAULT_PARAMS,
                     GroupReranker, ParametricReranker, RerankParams, RerankedCandidate,
                     RerankedSet, TypeReranker, dedup_reranked, grid_search, group_rerank,
                     parametric_rerank, type_rerank)

__version__ = "0.1.0"
