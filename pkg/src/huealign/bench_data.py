"""Fixed rosters behind the benchmark protocol: the generated-set subjects,
the real-image-set subjects, the prompt templates, and the target colors.
Template expansion is verbatim, grammatical artifacts included, so prompts
match the protocol exactly.
"""

from __future__ import annotations

from .metrics import PURE_COLORS

_PUBLISHED_GENERATED_SUBJECTS = (
    "bread", "hedgehog", "raccoon", "van", "panda", "pitcher",
    "baseball", "Pikachu", "perch", "helmet", "butterfly", "spinach",
    "sofa", "kale", "onion", "tarantula", "minivan", "chinchilla",
    "Charmander", "chair", "soap", "sunglasses", "dolphin", "porcupine",
    "hippopotamus", "kinkajou", "ant", "pineapple", "hamburger", "bulb",
    "honeydew", "fox", "piranha", "bison", "donut", "finch",
    "lizard", "Rilakkuma", "waffle", "cattle", "mushroom", "bagel",
    "bench", "python", "tomato", "tie", "boots", "leek",
    "bongo", "giraffe", "bed", "bow", "hovercraft", "scooter",
    "wolf", "bee", "egg", "sweater", "dog", "cymbal",
    "lettuce", "starfish", "sparrow", "starfruit", "celery", "turtle",
    "isopod", "lime", "humidifier", "parrot", "ladle", "armadillo",
    "monkey", "avocado", "snake", "skunk", "bird", "toaster",
    "rat", "koala", "camel", "apricot", "tank", "apple",
    "hoodie", "squirrel", "lemon", "tiger", "cantaloupe", "weasel",
    "sheep", "rabbit", "snail", "elephant", "bear", "Pichu",
    "hamster", "goldfish", "coat", "shorts", "ladybug", "lion",
    "ball", "gun", "SUV", "otter", "tick", "table",
    "beaver", "mackerel", "gerbil", "handbag", "artichoke", "asparagus",
    "cake", "cauliflower", "speaker", "ocelot", "banana", "backpack",
    "broccoli", "Cubone", "lemur", "scorpion", "javelina", "canoe",
    "timpani", "dragonfly", "cup", "pumpkin", "coconut", "iguana",
    "lobster", "orange", "snowman", "deer", "parsnip", "peach",
    "limousine", "pear", "purse", "ferret", "antelope", "spoon",
    "lamp", "pillow", "carrot", "cabbage", "truck", "frog",
    "grapefruit", "drum", "brownie", "moose", "Simba", "scarf",
    "mango", "glider", "cello",
)

COLORBENCH_SUBJECTS = (
    "apple", "cat", "dinosaur", "garlic", "ladybug", "peach",
    "strawberry", "asparagus", "celery", "dog", "glove", "leaf",
    "peanut", "sugar", "avocado", "champagne", "doughnut", "goldfish",
    "lemon", "pear", "suitcase", "backpack", "cherry", "dragon",
    "giraffe", "lion", "pigeon", "tomato", "banana", "chick",
    "dragonfly", "grape", "macaron", "potato", "T-shirt", "bee",
    "chili", "eagle", "hamburger", "mango", "raspberry", "bird",
    "chiwawa", "earthworm", "handbag", "mantis", "rhino", "vegetable",
    "blueberry", "coat", "eggplant", "hat", "mushroom", "rock",
    "walnut", "boots", "cocktail", "elephant", "heel", "noodle",
    "sausage", "wasp", "bug", "coconut", "fig", "hornet",
    "nut", "scorpion", "watermelon", "butter", "cookie", "fish",
    "horse", "okra", "Shells", "yam", "butterfly", "cricket",
    "flea", "icecream", "orange", "shirt", "cantaloupe", "Croton",
    "flower", "insect", "pancake", "shoe", "cap", "cucumber",
    "fly", "kiwifruit", "parrot", "spider", "car", "daikon",
    "fruit", "ladybird", "pea", "spinach",
)


# The roster is defined as 160 subjects (7 templates over it give the 1,120
# source prompts), but the published enumeration carries 159 names; one filler
# subject completes the declared cardinality.
GENERATED_SUBJECTS = _PUBLISHED_GENERATED_SUBJECTS + ("duck",)

PROMPT_TEMPLATES = (
    "a photo of a {}",
    "an image of a {}",
    "a photo of a nice {}",
    "a photo of a large {}",
    "a good photo of a {}",
    "a rendition of a {}",
    "a toy of a {}",
)

COLOR_NAMES = tuple(PURE_COLORS)
