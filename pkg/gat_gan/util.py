import json
import os
from copy import deepcopy

from jsonpath_ng import parse
from jsonschema import ValidationError, validate

SCHEMA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'schemas')


def json_path(keys):
    """
    * Builds a quoted jsonpath such as $.'results'.'toy'.'16' from a key list.
    * Quotes inside keys are replaced with underscores.
    * @param {list} keys Path components
    * @return {string} jsonpath string
    """
    return '$.' + '.'.join("'" + str(key).replace("'", '_').replace('"', '_') + "'" for key in keys)


def assign_json_path_value(source_document, keys, value):
    """
    * Assign (update or insert) a value in a nested document at the path given by keys.
    * Missing intermediate keys are created as empty dicts.
    * @param {dict} source_document The document to be updated
    * @param {list} keys Path components, outermost first
    * @param {*} value Value to update to
    * @return {dict} updated document
    """
    document = deepcopy(source_document)
    keys = [str(key).replace("'", '_').replace('"', '_') for key in keys]
    current_item = document
    for key in keys[:-1]:
        if not isinstance(current_item.get(key), dict):
            current_item[key] = {}
        current_item = current_item[key]
    current_item.setdefault(keys[-1], None)
    parse(json_path(keys)).update(document, value)
    return document


def get_json_path_value(document, keys, default=None):
    matches = parse(json_path(keys)).find(document)
    return matches[0].value if matches else default


def load_schema(schema_type, schemas=None):
    """ Loads schemas/{schema_type}.json, or the file named for schema_type in `schemas` """
    rel_filepath = (schemas or {}).get(schema_type) or os.path.join(SCHEMA_DIR, f'{schema_type}.json')
    with open(rel_filepath) as handle:
        return json.load(handle)


def validate_json(document, schema_type, make_error=None, schemas=None):
    """
    * Check that a json document is valid based on a schema.
    * @param {dict} document The document
    * @param {string} schema_type Schema name under schemas/
    * @param {callable} make_error Builds the raised exception from (location, message)
    """
    try:
        validate(document, load_schema(schema_type, schemas))
    except ValidationError as exception:
        where = '.'.join(str(part) for part in exception.absolute_path) or schema_type
        message = f'{schema_type} schema: {exception.message} (at {where})'
        if make_error is None:
            raise ValueError(message) from exception
        raise make_error(where, message) from exception


def canonical_json(document):
    """ Deterministic JSON text: sorted keys, no whitespace variance """
    return json.dumps(document, sort_keys=True, separators=(',', ':'), allow_nan=False)
