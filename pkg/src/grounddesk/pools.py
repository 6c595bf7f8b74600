"""Built-in entity pools and the closed word classes of the description grammar.

Pool entries are (name, attribute vocab, relation partners). Partner names must
be parseable nouns: either pool members or entries in EXTRA_NOUNS.
"""

from __future__ import annotations

DETERMINERS = ("a", "an", "the")

# "next to" is the single two-token relation word.
RELATION_WORDS = ("on", "under", "next to", "near", "holding", "with", "without", "inside")

PARTICIPLES = ("lying", "sitting", "resting", "standing", "placed", "perched", "leaning")

# Attribute words usable for any object noun phrase (partner objects in
# relation clauses draw from this set; pool categories have richer vocabs).
GENERIC_ATTRIBUTES = ("red", "green", "blue", "black", "white", "brown", "yellow", "gray", "small", "large")

# Nouns that appear only as relation-clause objects ("a dog without dots").
EXTRA_NOUNS = (
    "dots", "spots", "stripes", "collar", "leash", "handle", "lid",
    "sticker", "cushion", "knife", "ball", "saucer",
)

# name | attributes | relation partners
DESK20 = (
    ("person", ("tall", "young", "old", "small", "large"), ("dog", "chair", "bicycle", "backpack", "cup")),
    ("dog", ("black", "white", "brown", "small", "large", "spotted", "fluffy"), ("person", "ball", "blanket", "collar", "pillow")),
    ("cat", ("black", "white", "gray", "striped", "small", "fluffy"), ("chair", "table", "pillow", "blanket", "bowl")),
    ("avocado", ("green", "ripe", "fresh", "small", "brown", "halved"), ("cutting board", "bowl", "table", "knife")),
    ("cutting board", ("wooden", "plastic", "large", "small", "worn"), ("table", "knife", "avocado", "bowl")),
    ("table", ("wooden", "metal", "large", "small", "white", "brown"), ("chair", "cup", "lamp", "book", "bowl")),
    ("chair", ("wooden", "metal", "plastic", "red", "blue", "small"), ("table", "person", "cushion", "blanket")),
    ("cup", ("ceramic", "glass", "red", "blue", "white", "small", "large"), ("table", "bowl", "book", "saucer")),
    ("bottle", ("glass", "plastic", "green", "blue", "large", "small", "empty"), ("table", "cup", "backpack", "bowl")),
    ("laptop", ("black", "gray", "silver", "small", "large", "shiny"), ("table", "book", "cup", "backpack")),
    ("book", ("red", "blue", "green", "large", "small", "worn"), ("table", "lamp", "chair", "laptop")),
    ("bowl", ("ceramic", "glass", "white", "blue", "large", "small"), ("table", "apple", "banana", "cup")),
    ("apple", ("red", "green", "yellow", "small", "fresh", "shiny"), ("bowl", "table", "banana", "cutting board")),
    ("banana", ("yellow", "green", "ripe", "small", "large", "fresh"), ("bowl", "table", "apple", "backpack")),
    ("backpack", ("black", "blue", "red", "leather", "large", "small"), ("person", "chair", "laptop", "bottle")),
    ("bicycle", ("red", "blue", "black", "small", "large", "shiny"), ("person", "car", "backpack", "dog")),
    ("car", ("red", "blue", "black", "white", "large", "shiny"), ("person", "bicycle", "dog", "cat")),
    ("pillow", ("white", "blue", "soft", "striped", "large", "small"), ("chair", "blanket", "cat", "table")),
    ("blanket", ("blue", "white", "striped", "soft", "folded", "large"), ("pillow", "chair", "cat", "dog")),
    ("lamp", ("metal", "ceramic", "white", "black", "small", "tall"), ("table", "book", "chair", "laptop")),
)

_DESK80_EXTRA = (
    ("mug", ("ceramic", "red", "blue", "white", "large", "small"), ("table", "saucer", "book", "laptop")),
    ("plate", ("ceramic", "white", "blue", "large", "small"), ("table", "fork", "spoon", "bowl")),
    ("fork", ("metal", "silver", "small", "shiny"), ("plate", "table", "spoon", "bowl")),
    ("spoon", ("metal", "silver", "small", "shiny", "wooden"), ("plate", "table", "fork", "bowl")),
    ("pan", ("metal", "black", "large", "small", "worn"), ("table", "spoon", "lid", "plate")),
    ("pot", ("metal", "black", "large", "small", "ceramic"), ("table", "lid", "spoon", "plant")),
    ("kettle", ("metal", "black", "white", "small", "shiny"), ("table", "mug", "cup", "teapot")),
    ("teapot", ("ceramic", "white", "blue", "small", "shiny"), ("table", "cup", "mug", "saucer")),
    ("towel", ("white", "blue", "striped", "soft", "folded", "large"), ("basket", "chair", "table", "hook")),
    ("mirror", ("large", "small", "round", "framed", "shiny"), ("table", "lamp", "wall", "shelf")),
    ("clock", ("round", "black", "white", "small", "large"), ("wall", "table", "shelf", "lamp")),
    ("vase", ("ceramic", "glass", "blue", "white", "tall", "small"), ("table", "flower", "shelf", "book")),
    ("plant", ("green", "small", "large", "leafy", "tall"), ("pot", "table", "shelf", "basket")),
    ("flower", ("red", "white", "yellow", "pink", "small", "fresh"), ("vase", "table", "plant", "basket")),
    ("basket", ("woven", "brown", "large", "small", "round"), ("table", "towel", "apple", "flower")),
    ("box", ("cardboard", "brown", "white", "large", "small"), ("table", "shelf", "sticker", "book")),
    ("bag", ("leather", "black", "brown", "large", "small"), ("person", "chair", "table", "shoe")),
    ("hat", ("black", "white", "red", "woven", "small", "large"), ("person", "shelf", "chair", "hook")),
    ("shoe", ("black", "brown", "white", "leather", "small", "large", "worn"), ("person", "shelf", "sock", "bag")),
    ("boot", ("black", "brown", "leather", "large", "worn", "muddy"), ("person", "shelf", "shoe", "mat")),
    ("glove", ("black", "white", "leather", "small", "worn"), ("person", "hat", "scarf", "basket")),
    ("scarf", ("red", "blue", "striped", "soft", "folded", "large"), ("person", "hat", "glove", "hook")),
    ("jacket", ("black", "blue", "brown", "leather", "large", "worn"), ("person", "chair", "hook", "scarf")),
    ("shirt", ("white", "blue", "striped", "small", "large", "folded"), ("person", "chair", "basket", "hook")),
    ("sock", ("white", "black", "striped", "small", "folded"), ("shoe", "basket", "person", "drawer")),
    ("umbrella", ("black", "red", "blue", "large", "small", "folded"), ("person", "bag", "hook", "chair")),
    ("phone", ("black", "white", "small", "shiny", "cracked"), ("table", "person", "charger", "laptop")),
    ("tablet", ("black", "white", "gray", "small", "shiny"), ("table", "person", "book", "charger")),
    ("keyboard", ("black", "white", "gray", "small", "large"), ("table", "monitor", "mouse", "laptop")),
    ("mouse", ("black", "white", "gray", "small", "shiny"), ("table", "keyboard", "monitor", "laptop")),
    ("monitor", ("black", "gray", "large", "small", "shiny"), ("table", "keyboard", "mouse", "laptop")),
    ("camera", ("black", "silver", "small", "shiny", "worn"), ("table", "person", "bag", "strap")),
    ("speaker", ("black", "gray", "white", "small", "large"), ("table", "shelf", "laptop", "monitor")),
    ("headphones", ("black", "white", "red", "large", "small"), ("table", "person", "laptop", "phone")),
    ("remote", ("black", "white", "gray", "small", "worn"), ("table", "couch", "pillow", "speaker")),
    ("charger", ("black", "white", "small", "tangled"), ("table", "phone", "laptop", "bag")),
    ("pen", ("black", "blue", "red", "small", "shiny"), ("notebook", "table", "cup", "folder")),
    ("pencil", ("yellow", "red", "small", "worn", "sharpened"), ("notebook", "table", "cup", "folder")),
    ("notebook", ("blue", "black", "red", "small", "large", "worn"), ("table", "pen", "pencil", "laptop")),
    ("folder", ("blue", "red", "yellow", "large", "small"), ("table", "notebook", "pen", "shelf")),
    ("scissors", ("metal", "red", "black", "small", "shiny"), ("table", "tape", "folder", "box")),
    ("stapler", ("black", "red", "gray", "small", "shiny"), ("table", "folder", "tape", "notebook")),
    ("tape", ("white", "brown", "small", "round"), ("table", "box", "scissors", "stapler")),
    ("candle", ("white", "red", "small", "tall", "round"), ("table", "shelf", "plate", "lamp")),
    ("frame", ("wooden", "metal", "black", "small", "large"), ("wall", "table", "shelf", "mirror")),
    ("bench", ("wooden", "metal", "long", "worn", "green"), ("person", "table", "plant", "dog")),
    ("stool", ("wooden", "metal", "small", "tall", "round"), ("table", "person", "plant", "lamp")),
    ("couch", ("gray", "blue", "brown", "large", "soft", "worn"), ("pillow", "blanket", "cat", "remote")),
    ("desk", ("wooden", "metal", "large", "small", "white"), ("chair", "laptop", "lamp", "notebook")),
    ("shelf", ("wooden", "metal", "white", "long", "small"), ("book", "box", "vase", "plant")),
    ("cabinet", ("wooden", "white", "large", "small", "worn"), ("plate", "cup", "bowl", "shelf")),
    ("drawer", ("wooden", "white", "small", "worn"), ("sock", "pen", "folder", "tape")),
    ("rug", ("red", "blue", "striped", "woven", "large", "soft"), ("table", "couch", "dog", "cat")),
    ("curtain", ("white", "blue", "striped", "long", "folded"), ("window", "wall", "lamp", "couch")),
    ("bucket", ("plastic", "metal", "blue", "red", "large", "small"), ("towel", "ball", "mat", "bench")),
    ("mat", ("woven", "brown", "green", "small", "large", "worn"), ("shoe", "boot", "bucket", "dog")),
    ("window", ("large", "small", "round", "framed"), ("curtain", "wall", "plant", "lamp")),
    ("wall", ("white", "gray", "blue", "large"), ("frame", "mirror", "clock", "window")),
    ("hook", ("metal", "black", "small", "shiny"), ("wall", "hat", "scarf", "towel")),
    ("strap", ("leather", "black", "brown", "long", "worn"), ("bag", "camera", "hook", "backpack")),
)

DESK80 = DESK20 + _DESK80_EXTRA

BUILTIN_POOLS = {"desk20": DESK20, "desk80": DESK80}


def all_known_words():
    """(nouns, adjectives) across built-in pools, partner nouns and extras."""
    nouns: set[str] = set(EXTRA_NOUNS)
    adjectives: set[str] = set(GENERIC_ATTRIBUTES)
    for pool in BUILTIN_POOLS.values():
        for name, attrs, partners in pool:
            nouns.add(name)
            nouns.update(partners)
            adjectives.update(attrs)
    return nouns, adjectives
