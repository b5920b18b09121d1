"""@package context_gathering
@brief Corpus chunking, BM25 and dense scoring, hybrid top-k retrieval

The index is built once and read only afterwards, so concurrent episodes
may share it.
"""

#==========================================================================
# Copyright (c) 2026 Randal Eike
#
# Permission is hereby granted, free of charge, to any person obtaining a
# copy of self software and associated documentation files (the "Software"),
# to deal in the Software without restriction, including without limitation
# the rights to use, copy, modify, merge, publish, distribute, sublicense,
# and/or sell copies of the Software, and to permit persons to whom the
# Software is furnished to do so, subject to the following conditions:
#
# The above copyright notice and self permission notice shall be included
# in all copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND,
# EXPRESS OR IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF
# MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT.
# IN NO EVENT SHALL THE AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY
# CLAIM, DAMAGES OR OTHER LIABILITY, WHETHER IN AN ACTION OF CONTRACT,
# TORT OR OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH THE
# SOFTWARE OR THE USE OR OTHER DEALINGS IN THE SOFTWARE.
#==========================================================================

import hashlib
import json
import logging
import math
import re
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np
from rank_bm25 import BM25Okapi

from context_gathering_grocsoftware.harness_errors import ConfigurationError
from context_gathering_grocsoftware.harness_errors import CorpusFormatError
from context_gathering_grocsoftware.harness_errors import InvalidArgumentError

logger = logging.getLogger(__name__)

INDEX_FORMAT = "context-gathering-index"
INDEX_FORMAT_VERSION = 1

_TOKEN_SPLIT_REGX = re.compile(r"[\W_]+")

def tokenize_text(text:str)->list:
    """!
    @brief Lowercase and split on runs of non-alphanumeric characters

    @param text (string): Input text

    @return list of string - tokens in order, empty tokens dropped
    """
    return [token for token in _TOKEN_SPLIT_REGX.split(text.lower()) if token]

@dataclass(frozen=True)
class Chunk:
    """!
    Retrievable text unit
    """
    chunk_id: str
    doc_id: str
    text: str
    position: int

@dataclass(frozen=True)
class RetrievalConfig:
    """!
    Retrieval and chunking parameters.  alpha is the lexical (BM25) weight.
    """
    alpha: float = 0.5
    k: int = 5
    bm25_k1: float = 1.5
    bm25_b: float = 0.75
    chunk_size: int = 200
    chunk_overlap: int = 40

    def validate(self):
        """!
        @brief Range check every field

        @return RetrievalConfig - self when valid
        """
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must be in [0,1], got {self.alpha}")
        if self.k < 1:
            raise ConfigurationError(f"k must be at least 1, got {self.k}")
        if self.bm25_k1 <= 0.0:
            raise ConfigurationError(f"bm25_k1 must be positive, got {self.bm25_k1}")
        if not 0.0 <= self.bm25_b <= 1.0:
            raise ConfigurationError(f"bm25_b must be in [0,1], got {self.bm25_b}")
        if self.chunk_size < 1 or not 0 <= self.chunk_overlap < self.chunk_size:
            raise ConfigurationError(f"chunking requires 0 <= overlap < size, got "
                                     f"size={self.chunk_size} overlap={self.chunk_overlap}")
        return self

class NonNegativeBM25(BM25Okapi):
    """!
    Okapi BM25 with IDF = ln((N - df + 0.5)/(df + 0.5) + 1), never negative
    """
    def _calc_idf(self, nd):
        """!
        @brief Replace the epsilon floored Okapi IDF

        @param nd (dict): term to document frequency
        """
        for word, freq in nd.items():
            self.idf[word] = math.log((self.corpus_size - freq + 0.5) / (freq + 0.5) + 1.0)

class Embedder(ABC):
    """!
    Text to dense vector interface
    """
    ## Identifier persisted with the index, e.g. "hashing:256"
    name = ""
    ## Vector dimension
    dimension = 0

    @abstractmethod
    def embed(self, texts:list)->np.ndarray:
        """!
        @brief Embed a batch

        @param texts (list of string): Texts to embed

        @return numpy array shape (len(texts), dimension)
        """

    def embed_one(self, text:str)->np.ndarray:
        """!
        @brief Embed a single text

        @param text (string): Text to embed

        @return numpy vector
        """
        return self.embed([text])[0]

def deterministic_test_embedder(text:str, dimension:int, seed:int = 0)->np.ndarray:
    """!
    @brief Seeded hash bag-of-tokens projection, L2 normalized

    Each token hashes (blake2b, platform independent) to one coordinate and a
    sign.  Text without tokens maps to the zero vector.

    @param text (string): Text to embed
    @param dimension (int): Output dimension, at least 1
    @param seed (int): Hash seed

    @return numpy vector
    """
    if dimension < 1:
        raise InvalidArgumentError(f"embedding dimension must be at least 1, got {dimension}")
    vector = np.zeros(dimension, dtype=np.float64)
    for token, count in sorted(Counter(tokenize_text(text)).items()):
        digest = hashlib.blake2b(f"{seed}:{token}".encode("utf-8"), digest_size=8).digest()
        value = int.from_bytes(digest, "little")
        sign = 1.0 if (value // dimension) % 2 == 0 else -1.0
        vector[value % dimension] += sign * count
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        return vector
    return vector / norm

class HashingEmbedder(Embedder):
    """!
    Offline embedder built on deterministic_test_embedder
    """
    def __init__(self, dimension:int = 256, seed:int = 0):
        """!
        @brief Constructor

        @param dimension (int): Output dimension
        @param seed (int): Hash seed
        """
        if dimension < 1:
            raise ConfigurationError(f"embedding dimension must be at least 1, got {dimension}")
        self.dimension = dimension
        ## Hash seed
        self.seed = seed
        self.name = f"hashing:{dimension}" if seed == 0 else f"hashing:{dimension}:{seed}"

    def embed(self, texts:list)->np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension), dtype=np.float64)
        return np.vstack([deterministic_test_embedder(t, self.dimension, self.seed)
                          for t in texts])

class CorpusIndex():
    """!
    Chunks plus BM25 statistics and optional dense vectors
    """
    def __init__(self, chunks:list, cfg:RetrievalConfig, embedder_name:str = None,
                 embeddings:np.ndarray = None):
        """!
        @brief Constructor, computes the term statistics

        @param chunks (list of Chunk): Chunks in index order
        @param cfg (RetrievalConfig): Configuration used for chunking and BM25
        @param embedder_name (string): Name of the embedder that produced embeddings or None
        @param embeddings (numpy array): One row per chunk or None
        """
        ids = [c.chunk_id for c in chunks]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("chunk ids must be unique within an index")
        if embeddings is not None:
            embeddings = np.asarray(embeddings, dtype=np.float64)
            if embeddings.ndim != 2 or embeddings.shape[0] != len(chunks):
                raise InvalidArgumentError("embeddings must have one row per chunk")

        ## Chunks in index order
        self.chunks = list(chunks)
        ## Chunking and scoring configuration
        self.cfg = cfg
        ## Embedder name or None
        self.embedder_name = embedder_name
        ## Dense matrix (n, d) or None
        self.embeddings = embeddings
        ## Per chunk token lists
        self.chunk_tokens = [tokenize_text(c.text) for c in self.chunks]
        ## BM25 scorer or None for an empty index
        self._bm25 = None
        if self.chunks and any(self.chunk_tokens):
            self._bm25 = NonNegativeBM25(self.chunk_tokens, k1=cfg.bm25_k1, b=cfg.bm25_b)

    def __len__(self)->int:
        return len(self.chunks)

    def chunk_ids(self)->list:
        """!
        @brief Chunk ids in index order

        @return list of string
        """
        return [c.chunk_id for c in self.chunks]

    def has_embeddings(self)->bool:
        """!
        @brief True when dense vectors are present

        @return bool
        """
        return self.embeddings is not None and len(self.chunks) > 0

    def document_frequencies(self)->dict:
        """!
        @brief Term to number of chunks containing it

        @return dict
        """
        frequencies = Counter()
        for tokens in self.chunk_tokens:
            frequencies.update(set(tokens))
        return dict(sorted(frequencies.items()))

    def term_frequencies(self)->list:
        """!
        @brief Per chunk term counts

        @return list of dict
        """
        return [dict(Counter(tokens)) for tokens in self.chunk_tokens]

    def average_chunk_length(self)->float:
        """!
        @brief Mean token count per chunk, 0 for an empty index

        @return float
        """
        if not self.chunk_tokens:
            return 0.0
        return sum(len(t) for t in self.chunk_tokens) / len(self.chunk_tokens)

    def lexical_scores(self, query:str)->np.ndarray:
        """!
        @brief BM25 score per chunk in index order

        @param query (string): Query text

        @return numpy vector
        """
        if self._bm25 is None:
            return np.zeros(len(self.chunks), dtype=np.float64)
        return np.asarray(self._bm25.get_scores(tokenize_text(query)), dtype=np.float64)

def split_into_chunks(doc_id:str, text:str, cfg:RetrievalConfig)->list:
    """!
    @brief Sliding window over whitespace tokens

    @param doc_id (string): Document id
    @param text (string): Document text
    @param cfg (RetrievalConfig): chunk_size and chunk_overlap

    @return list of Chunk - ids are doc_id#position
    """
    tokens = text.split()
    stride = cfg.chunk_size - cfg.chunk_overlap
    chunks = []
    start = 0
    while start < len(tokens):
        end = min(start + cfg.chunk_size, len(tokens))
        position = len(chunks)
        chunks.append(Chunk(chunk_id=f"{doc_id}#{position}", doc_id=doc_id,
                            text=" ".join(tokens[start:end]), position=position))
        if end >= len(tokens):
            break
        start += stride
    return chunks

def ingest_corpus(documents:list, cfg:RetrievalConfig, embedder:Embedder = None)->CorpusIndex:
    """!
    @brief Chunk documents and build the index

    @param documents (list of (doc_id, text)): Corpus documents
    @param cfg (RetrievalConfig): Chunking and scoring configuration
    @param embedder (Embedder): Dense embedder or None for a lexical only index

    @return CorpusIndex
    """
    cfg.validate()
    seen_ids = set()
    chunks = []
    for doc_id, text in documents:
        if doc_id in seen_ids:
            raise InvalidArgumentError(f"duplicate document id '{doc_id}'")
        seen_ids.add(doc_id)
        doc_chunks = split_into_chunks(doc_id, text, cfg)
        if not doc_chunks:
            logger.warning("document %s has no text, skipped", doc_id)
        chunks.extend(doc_chunks)

    embeddings = None
    embedder_name = None
    if embedder is not None:
        embedder_name = embedder.name
        embeddings = embedder.embed([c.text for c in chunks])
    logger.info("ingested %d documents into %d chunks", len(seen_ids), len(chunks))
    return CorpusIndex(chunks, cfg, embedder_name, embeddings)

def bm25_scores(index:CorpusIndex, query:str)->dict:
    """!
    @brief BM25 score for every chunk

    @param index (CorpusIndex): Index to score
    @param query (string): Query text, tokenized like the chunks

    @return dict chunk_id to score
    """
    scores = index.lexical_scores(query)
    return {chunk.chunk_id: float(score) for chunk, score in zip(index.chunks, scores)}

def dense_scores(index:CorpusIndex, query_embedding:np.ndarray)->np.ndarray:
    """!
    @brief Cosine similarity of the query vector to every chunk

    @param index (CorpusIndex): Index with embeddings
    @param query_embedding (numpy vector): Query vector

    @return numpy vector, 0 where either vector is zero
    """
    query = np.asarray(query_embedding, dtype=np.float64)
    chunk_norms = np.linalg.norm(index.embeddings, axis=1)
    query_norm = float(np.linalg.norm(query))
    denominator = chunk_norms * query_norm
    raw = index.embeddings @ query
    return np.divide(raw, denominator, out=np.zeros_like(raw), where=denominator > 0.0)

def min_max_normalize(scores:np.ndarray)->np.ndarray:
    """!
    @brief Scale to [0,1] over the candidate pool; a flat vector maps to zeros

    @param scores (numpy vector): Raw scores

    @return numpy vector
    """
    if scores.size == 0:
        return scores
    low = float(scores.min())
    high = float(scores.max())
    if high - low <= 0.0:
        return np.zeros_like(scores)
    return (scores - low) / (high - low)

def hybrid_retrieve(index:CorpusIndex, query:str, query_embedding, cfg:RetrievalConfig)->list:
    """!
    @brief Blend normalized BM25 and dense scores and keep the top k

    blended = alpha * lexical + (1 - alpha) * dense.  Ties go to the higher
    lexical score, then to the lexicographically smaller chunk id.

    @param index (CorpusIndex): Index to search
    @param query (string): Query text
    @param query_embedding (numpy vector): Query vector, required when alpha < 1
    @param cfg (RetrievalConfig): alpha and k

    @return list of (Chunk, blended score), best first
    """
    cfg.validate()
    if len(index) == 0:
        return []

    lexical = index.lexical_scores(query)
    if cfg.alpha < 1.0:
        if not index.has_embeddings():
            raise ConfigurationError("alpha < 1 needs an index built with an embedder")
        if query_embedding is None:
            raise ConfigurationError("alpha < 1 needs a query embedding")
        dense = dense_scores(index, query_embedding)
    else:
        dense = np.zeros_like(lexical)

    blended = cfg.alpha * min_max_normalize(lexical) + (1.0 - cfg.alpha) * min_max_normalize(dense)
    order = sorted(range(len(index)),
                   key=lambda i: (-blended[i], -lexical[i], index.chunks[i].chunk_id))
    return [(index.chunks[i], float(blended[i])) for i in order[:cfg.k]]

def format_observation(results:list)->str:
    """!
    @brief Observation text shown to agents and the extractor

    @param results (list of (Chunk, score)): Retrieval output

    @return string - one "[chunk_id] text" paragraph per chunk
    """
    return "\n\n".join(f"[{chunk.chunk_id}] {chunk.text}" for chunk, _ in results)

class Retriever():
    """!
    An index bound to the embedder and configuration used at query time
    """
    def __init__(self, index:CorpusIndex, cfg:RetrievalConfig, embedder:Embedder = None):
        """!
        @brief Constructor

        @param index (CorpusIndex): Shared read only index
        @param cfg (RetrievalConfig): Query time alpha and k
        @param embedder (Embedder): Query embedder, must match the index embedder
        """
        cfg.validate()
        if cfg.alpha < 1.0 and len(index) > 0:
            if embedder is None or not index.has_embeddings():
                raise ConfigurationError(f"alpha={cfg.alpha} needs dense embeddings and an "
                                         "embedder")
            if embedder.name != index.embedder_name:
                raise ConfigurationError(f"query embedder {embedder.name} does not match index "
                                         f"embedder {index.embedder_name}")
        ## Shared index
        self.index = index
        ## Query time configuration
        self.cfg = cfg
        ## Query embedder or None
        self.embedder = embedder

    def retrieve(self, query:str)->list:
        """!
        @brief Hybrid top-k for one query

        @param query (string): Query text

        @return list of (Chunk, score)
        """
        query_embedding = None
        if self.cfg.alpha < 1.0 and self.embedder is not None:
            query_embedding = self.embedder.embed_one(query)
        return hybrid_retrieve(self.index, query, query_embedding, self.cfg)

def read_corpus_jsonl(file_name:str)->list:
    """!
    @brief Read line delimited {"doc_id", "text"} records

    @param file_name (string): Corpus path

    @return list of (doc_id, text)
    """
    documents = []
    with open(file_name, "rt", encoding="utf-8") as corpus_file:
        for line_number, line in enumerate(corpus_file, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                documents.append((str(record["doc_id"]), str(record["text"])))
            except (ValueError, KeyError, TypeError) as error:
                raise CorpusFormatError(file_name, line_number, f"bad corpus record: {error}") \
                    from error
    return documents

def save_index(index:CorpusIndex, file_name:str):
    """!
    @brief Write a versioned JSON index file, byte stable for equal input

    @param index (CorpusIndex): Index to persist
    @param file_name (string): Output path
    """
    document = {
        "format": INDEX_FORMAT,
        "version": INDEX_FORMAT_VERSION,
        "config": asdict(index.cfg),
        "embedder": index.embedder_name,
        "chunks": [asdict(c) for c in index.chunks],
        "statistics": {"document_frequencies": index.document_frequencies(),
                       "average_chunk_length": index.average_chunk_length()},
        "embeddings": None if index.embeddings is None else index.embeddings.tolist(),
    }
    with open(file_name, "wt", encoding="utf-8") as index_file:
        index_file.write(json.dumps(document, sort_keys=True, ensure_ascii=False,
                                    separators=(",", ":")))
        index_file.write("\n")

def load_index(file_name:str)->CorpusIndex:
    """!
    @brief Read an index written by save_index; statistics are recomputed

    @param file_name (string): Index path

    @return CorpusIndex
    """
    try:
        with open(file_name, "rt", encoding="utf-8") as index_file:
            document = json.load(index_file)
    except ValueError as error:
        raise CorpusFormatError(file_name, 0, f"index is not JSON: {error}") from error

    if document.get("format") != INDEX_FORMAT:
        raise CorpusFormatError(file_name, 0, "not a context gathering index")
    if document.get("version") != INDEX_FORMAT_VERSION:
        raise CorpusFormatError(file_name, 0,
                                f"unsupported index version {document.get('version')}")
    try:
        cfg = RetrievalConfig(**document["config"])
        chunks = [Chunk(**entry) for entry in document["chunks"]]
    except (KeyError, TypeError) as error:
        raise CorpusFormatError(file_name, 0, f"malformed index: {error}") from error
    embeddings = document.get("embeddings")
    if embeddings is not None:
        embeddings = np.asarray(embeddings, dtype=np.float64).reshape(len(chunks), -1)
    return CorpusIndex(chunks, cfg, document.get("embedder"), embeddings)
