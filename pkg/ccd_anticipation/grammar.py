"""
Template grammar for synthetic cooking procedures.

A procedure is planned as ``prepare`` steps, one ``combine``, one ``heat``, ``add`` steps and a
closing ``finish``. Slot fillers depend on the ingredient set (each ingredient has a category
with its own verbs and cooking times) and on earlier choices (the vessel picked when combining is
the one heated next, ``add`` steps use the ingredients not prepared yet), so the next step is
statistically predictable from the ingredients and the observed prefix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ccd_anticipation.errors import ConfigError

logger = logging.getLogger(__name__)

FAMILY_ORDER = ('prepare', 'combine', 'heat', 'add', 'finish')

CATEGORIES = ('vegetable', 'protein', 'liquid', 'spice', 'pantry')

INVENTORY = {
    'vegetable': ['onion', 'garlic', 'carrot', 'celery', 'tomato', 'pepper', 'zucchini',
                  'spinach', 'mushroom', 'potato'],
    'protein': ['chicken', 'beef', 'pork', 'shrimp', 'tofu', 'salmon', 'egg', 'sausage'],
    'liquid': ['milk', 'cream', 'stock', 'water', 'wine', 'vinegar'],
    'spice': ['salt', 'paprika', 'cumin', 'oregano', 'basil', 'thyme', 'cinnamon'],
    'pantry': ['rice', 'pasta', 'flour', 'bread', 'cheese', 'butter', 'sugar', 'beans', 'lentils'],
}

CATEGORY_VERBS = {
    'vegetable': ['chop', 'dice', 'slice'],
    'protein': ['season', 'trim', 'cube'],
    'liquid': ['measure', 'warm'],
    'spice': ['grind', 'measure'],
    'pantry': ['rinse', 'measure', 'grate'],
}

CATEGORY_MINUTES = {
    'vegetable': ['3', '5'],
    'protein': ['10', '15', '20'],
    'liquid': ['5', '10'],
    'spice': ['1', '2'],
    'pantry': ['10', '15'],
}

VESSELS = ['bowl', 'pan', 'pot', 'skillet', 'dish']

HEAT_LEVELS = ['low', 'medium', 'high']

DEFAULT_TEMPLATES = {
    'prepare': [
        '{verb} the {ing} first',
        '{verb} the {ing} into small pieces',
        '{verb} the {ing} and set aside',
    ],
    'combine': [
        'in a {vessel} combine the {ing} and the {ing2}',
        'mix the {ing} with the {ing2} in a {vessel}',
    ],
    'heat': [
        'heat the {vessel} over {level} heat',
        'place the {vessel} over {level} heat and bring to a simmer',
    ],
    'add': [
        'add the {ing} and cook for {minutes} minutes',
        'stir in the {ing} and simmer for {minutes} minutes',
    ],
    'finish': [
        'garnish with the {ing} and serve',
        'serve the dish warm',
        'let the dish rest for {minutes} minutes and serve',
    ],
}


def _default_templates():
    return {family: list(templates) for family, templates in DEFAULT_TEMPLATES.items()}


@dataclass
class GrammarConfig:
    """
    Generator settings.

    `Args:`
        min_steps / max_steps: int
            Bounds of the uniform step-count distribution
        n_ingredients: int
            Size of the ingredient inventory
        min_ingredients / max_ingredients: int
            Bounds of the number of ingredients drawn per procedure
        templates: dict
            Template family name -> list of templates with ``{slot}`` placeholders
        val_fraction / test_fraction: float
            Share of samples assigned to the validation and test splits
        version: str
            Grammar version tag written into corpus headers
    """

    min_steps: int = 4
    max_steps: int = 9
    n_ingredients: int = 40
    min_ingredients: int = 2
    max_ingredients: int = 5
    templates: dict = field(default_factory=_default_templates)
    val_fraction: float = 1 / 12
    test_fraction: float = 1 / 12
    version: str = 'cooking-v1'

    def validate(self):
        if self.min_steps < len(FAMILY_ORDER) - 1:
            raise ConfigError(f'min_steps must be at least {len(FAMILY_ORDER) - 1}, '
                              f'got {self.min_steps}')
        if self.min_steps > self.max_steps:
            raise ConfigError(f'min_steps ({self.min_steps}) > max_steps ({self.max_steps})')
        if self.n_ingredients < 1:
            raise ConfigError('n_ingredients must be positive')
        if not 1 <= self.min_ingredients <= self.max_ingredients <= self.n_ingredients:
            raise ConfigError('need 1 <= min_ingredients <= max_ingredients <= n_ingredients')
        for family in FAMILY_ORDER:
            if not self.templates.get(family):
                raise ConfigError(f'Template family {family} is missing or empty')
        unknown = set(self.templates) - set(FAMILY_ORDER)
        if unknown:
            raise ConfigError(f'Unknown template families: {sorted(unknown)}')
        if not 0 <= self.val_fraction < 1 or not 0 <= self.test_fraction < 1 \
                or self.val_fraction + self.test_fraction >= 1:
            raise ConfigError('val_fraction and test_fraction must leave a non-empty train split')
        return self

    def to_dict(self):
        return {
            'min_steps': self.min_steps,
            'max_steps': self.max_steps,
            'n_ingredients': self.n_ingredients,
            'min_ingredients': self.min_ingredients,
            'max_ingredients': self.max_ingredients,
            'templates': {k: list(v) for k, v in self.templates.items()},
            'val_fraction': self.val_fraction,
            'test_fraction': self.test_fraction,
            'version': self.version,
        }


def ingredient_name(ingredient_id):
    """
    Name of an inventory entry. Ids cycle through the categories; past the built-in word lists
    names are synthesized (``item40``, ...).
    """

    category = ingredient_category(ingredient_id)
    words = INVENTORY[category]
    position = ingredient_id // len(CATEGORIES)
    if position < len(words):
        return words[position]
    return f'item{ingredient_id}'


def ingredient_category(ingredient_id):
    return CATEGORIES[ingredient_id % len(CATEGORIES)]


def usage_order(ingredients):
    # Category order first, then id: a fixed function of the ingredient set.
    return sorted(ingredients, key=lambda i: (CATEGORIES.index(ingredient_category(i)), i))


def plan_procedure(n_steps, n_ingredients, rng):
    """
    Pick the family of every step.

    `Args:`
        n_steps: int
            Total number of steps (>= 4)
        n_ingredients: int
            Ingredients in the procedure; bounds the number of ``prepare`` steps
        rng: numpy.random.Generator
    `Returns:`
        list of str
    """

    flexible = n_steps - 3
    n_prepare = int(rng.integers(1, min(flexible, n_ingredients) + 1))
    n_add = flexible - n_prepare
    return ['prepare'] * n_prepare + ['combine', 'heat'] + ['add'] * n_add + ['finish']


def realize_procedure(ingredients, n_steps, cfg, rng):
    """
    Generate the word sequences of one procedure.

    `Args:`
        ingredients: list of int
            Ingredient ids of the procedure
        n_steps: int
        cfg: GrammarConfig
        rng: numpy.random.Generator
    `Returns:`
        list of list of str
    """

    order = usage_order(ingredients)
    plan = plan_procedure(n_steps, len(order), rng)
    vessel = VESSELS[int(rng.integers(len(VESSELS)))]
    prepared = []
    added = 0
    steps = []

    for family in plan:
        templates = cfg.templates[family]
        template = templates[int(rng.integers(len(templates)))]

        if family == 'prepare':
            ing = order[len(prepared) % len(order)]
            prepared.append(ing)
        elif family == 'combine':
            ing = prepared[0]
            ing2 = prepared[1] if len(prepared) > 1 else order[-1]
        elif family == 'add':
            remaining = [i for i in order if i not in prepared] or order
            ing = remaining[added % len(remaining)]
            added += 1
        elif family == 'finish':
            garnish = [i for i in order if ingredient_category(i) in ('spice', 'vegetable')]
            ing = garnish[-1] if garnish else order[-1]
        else:
            ing = order[0]

        slots = {
            'ing': ingredient_name(ing),
            'ing2': ingredient_name(ing2) if family == 'combine' else '',
            'verb': rng.choice(CATEGORY_VERBS[ingredient_category(ing)]),
            'vessel': vessel,
            'level': HEAT_LEVELS[int(rng.integers(len(HEAT_LEVELS)))],
            'minutes': rng.choice(CATEGORY_MINUTES[ingredient_category(ing)]),
        }

        try:
            text = template.format(**slots)
        except KeyError as e:
            raise ConfigError(f'Template {template!r} uses unknown slot {e}')

        steps.append(text.lower().split())

    return steps
