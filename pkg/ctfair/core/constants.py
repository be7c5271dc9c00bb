#!/usr/bin/env python3
"""
Constants used throughout the application.
"""

# Reserved vocabulary tokens. Both are uppercase, tokenize() lowercases every
# input piece, so neither can be produced from raw text.
IDENTITY_TOKEN = "IDENTITY"
OOV_TOKEN = "<OOV>"

# Template slot markers for synthetic corpora
SLOT_NAME = "NAME"
SLOT_ADJECTIVE = "ADJECTIVE"
SLOT_IDENTITY = "IDENTITY_ADJ"
TEMPLATE_SLOTS = (SLOT_NAME, SLOT_ADJECTIVE, SLOT_IDENTITY)

# Model architecture defaults
DEFAULT_EMBEDDING_DIM = 16
DEFAULT_WINDOW = 3
DEFAULT_CHANNELS = 32

# Training defaults
TRAINING_METHODS = ("baseline", "blind", "augment", "clp", "clp_nontoxic")
CLP_METHODS = ("clp", "clp_nontoxic")
DEFAULT_CLP_LAMBDA = 1.0
DEFAULT_LEARNING_RATE = 1e-2
DEFAULT_EPOCHS = 5
DEFAULT_BATCH_SIZE = 32
DEFAULT_SPLIT_FRACTIONS = (0.8, 0.1, 0.1)
PROBABILITY_CLAMP = 1e-12

# Metric defaults
DEFAULT_MAX_TOKENS = 10
DEFAULT_THRESHOLD = 0.5

# Identity terms: 47 unigrams and 3 bigrams. The held-out split keeps 12
# unigrams plus every bigram, since blindness cannot use bigrams in training.
HELDOUT_UNIGRAMS = (
    "christian",
    "trans",
    "lgbtq",
    "nonbinary",
    "latina",
    "canadian",
    "japanese",
    "protestant",
    "taoist",
    "younger",
    "millenial",
    "deaf",
)
TRAIN_UNIGRAMS = (
    "lesbian",
    "gay",
    "bisexual",
    "transgender",
    "queer",
    "lgbt",
    "homosexual",
    "straight",
    "heterosexual",
    "male",
    "female",
    "african",
    "black",
    "white",
    "european",
    "hispanic",
    "latino",
    "latinx",
    "mexican",
    "american",
    "asian",
    "indian",
    "chinese",
    "muslim",
    "jewish",
    "buddhist",
    "catholic",
    "sikh",
    "old",
    "older",
    "young",
    "teenage",
    "elderly",
    "blind",
    "paralyzed",
)
IDENTITY_BIGRAMS = ("african american", "middle eastern", "middle aged")

# Synthetic template corpus defaults
DEFAULT_TEMPLATES = (
    "IDENTITY_ADJ people are ADJECTIVE",
    "being IDENTITY_ADJ is ADJECTIVE",
    "i am a ADJECTIVE IDENTITY_ADJ person",
    "my IDENTITY_ADJ friend is ADJECTIVE",
    "NAME is a ADJECTIVE person",
    "NAME is ADJECTIVE",
)
DEFAULT_CONTEXT_TEMPLATES = (
    "NAME is IDENTITY_ADJ",
    "we met some IDENTITY_ADJ people",
    "the IDENTITY_ADJ one",
)
DEFAULT_NAMES = (
    "alice",
    "bob",
    "carlos",
    "dana",
    "emeka",
    "fatima",
    "george",
    "hana",
    "ivan",
    "jun",
)
DEFAULT_TOXIC_ADJECTIVES = (
    "stupid",
    "ugly",
    "disgusting",
    "horrible",
    "nasty",
    "worthless",
    "pathetic",
    "vile",
)
DEFAULT_NONTOXIC_ADJECTIVES = (
    "nice",
    "great",
    "friendly",
    "wonderful",
    "kind",
    "smart",
    "lovely",
    "fantastic",
)
# Terms that co-occur with toxic labels in the skewed training corpus
DEFAULT_SKEWED_TERMS = (
    "gay",
    "homosexual",
    "lesbian",
    "transgender",
    "queer",
    "muslim",
    "jewish",
    "black",
    "trans",
    "deaf",
)
DEFAULT_SKEWED_TOXIC_RATE = 0.8
DEFAULT_BASE_TOXIC_RATE = 0.0
# Toxic share of the relabelled copies of nontoxic template sentences for skewed terms
DEFAULT_SKEWED_TEMPLATE_RATE = 0.6
DEFAULT_CONTEXT_COPIES = 5

# Checkpoint format marker
CHECKPOINT_FORMAT = "ctfair-checkpoint"
CHECKPOINT_VERSION = 1
