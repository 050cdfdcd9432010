# apps/language/captions.py
"""
Descripciones sintéticas por plantilla. La elección de sinónimos es una
descomposición en base mixta de la semilla: la semilla 1 produce la frase
canónica (primer elemento de cada lista).
"""

from functools import lru_cache

from django.core.exceptions import ValidationError

from apps.motion.scripts import MOTION_SCRIPTS

SUBJECTS = ('the person', 'a person', 'someone', 'the man')

# Tipo de escena -> etiqueta del referente y sus sinónimos
REFERENTS = {
    'flat': ('floor', ('the open floor', 'the flat ground', 'the empty floor')),
    'stairs': ('stairs', ('the stairs', 'the steps', 'the staircase')),
    'box_room': ('box', ('the box', 'the crate', 'the wooden block')),
    'corridor': ('corridor', ('the corridor', 'the hallway', 'the narrow passage')),
    'dynamic_walker': ('pedestrian', ('the passing pedestrian', 'the walking stranger', 'the other person')),
}

TEMPLATES = {
    ('circle', 'floor'): (
        'walks in a circle on {r}', 'circles around on {r}', 'walks a loop across {r}'),
    ('wave', 'floor'): (
        'stands on {r} and waves', 'waves while standing on {r}', 'stays on {r} and waves a hand'),
    ('climb_stairs', 'stairs'): (
        'walks forward and climbs {r}', 'steps forward and climbs {r}', 'moves ahead and goes up {r}'),
    ('walk_to', 'box'): (
        'walks over to {r}', 'walks up to {r}', 'heads straight to {r}'),
    ('sit_on', 'box'): (
        'walks over and sits on {r}', 'approaches and sits down on {r}', 'turns around and sits on {r}'),
    ('walk_to', 'corridor'): (
        'walks forward through {r}', 'walks down {r}', 'moves along {r}'),
    ('walk_to', 'pedestrian'): (
        'walks forward next to {r}', 'walks ahead beside {r}', 'moves forward alongside {r}'),
    ('wave', 'pedestrian'): (
        'walks forward and waves at {r}', 'waves to {r} while walking', 'walks on and greets {r}'),
}

# Plantillas para los pares sin redacción propia
GENERIC_TEMPLATES = {
    'walk_to': ('walks over toward {r}', 'walks ahead toward {r}', 'heads over toward {r}'),
    'sit_on': ('walks near {r} and sits down', 'sits down close to {r}', 'crouches and sits by {r}'),
    'climb_stairs': ('steps up and climbs near {r}', 'climbs up beside {r}', 'goes up a step near {r}'),
    'circle': ('walks in a circle around {r}', 'circles near {r}', 'walks a loop beside {r}'),
    'wave': ('stands near {r} and waves', 'waves a hand beside {r}', 'waves toward {r}'),
}


def scene_kind_of(scene):
    return getattr(scene, 'kind', scene)


def caption_label(scene, script):
    """(acción, referente) que debe nombrar toda descripción de este par."""
    kind = scene_kind_of(scene)
    if kind not in REFERENTS:
        raise ValidationError(f"Tipo de escena desconocido '{kind}'.")
    if script not in MOTION_SCRIPTS:
        raise ValidationError(f"Guion de movimiento desconocido '{script}'.")
    return script, REFERENTS[kind][0]


def templates_for(action, referent):
    return TEMPLATES.get((action, referent), GENERIC_TEMPLATES[action])


def semantic_tag(scene, script):
    return '{}:{}'.format(*caption_label(scene, script))


def synth_caption(scene, script, seed):
    action, referent = caption_label(scene, script)
    phrases = REFERENTS[scene_kind_of(scene)][1]
    templates = templates_for(action, referent)
    radices = (len(SUBJECTS), len(templates), len(phrases))
    index = (int(seed) - 1) % (radices[0] * radices[1] * radices[2])
    subject = SUBJECTS[index % radices[0]]
    template = templates[(index // radices[0]) % radices[1]]
    phrase = phrases[index // (radices[0] * radices[1])]
    return f'{subject} {template.format(r=phrase)}'


@lru_cache(maxsize=1)
def _inverse_table():
    table = {}
    for kind, (referent, phrases) in REFERENTS.items():
        for action in MOTION_SCRIPTS:
            templates = templates_for(action, referent)
            for subject in SUBJECTS:
                for template in templates:
                    for phrase in phrases:
                        table[f'{subject} {template.format(r=phrase)}'] = (action, referent)
    return table


def parse_caption(text):
    """Recupera (acción, referente) de una descripción generada por plantilla."""
    key = ' '.join(text.lower().split())
    try:
        return _inverse_table()[key]
    except KeyError:
        raise ValidationError(f"La descripción '{text}' no corresponde a ninguna plantilla.")


def lexicon():
    """Todas las palabras que pueden aparecer en una descripción sintética."""
    words = set()
    for subject in SUBJECTS:
        words.update(subject.split())
    for _, phrases in REFERENTS.values():
        for phrase in phrases:
            words.update(phrase.split())
    for templates in (*TEMPLATES.values(), *GENERIC_TEMPLATES.values()):
        for template in templates:
            words.update(template.replace('{r}', ' ').split())
    return sorted(words)
