"""Declarative schemas built from :mod:`hyperagg.fields`.

The same classes run in two directions. Result objects (runs, experiment
summaries) become plain dicts for the CSV and JSON writers, and the raw
strings of a config section become typed hyperparameters.
"""
import collections
import operator

import six

from hyperagg.exceptions import ConfigError
from hyperagg.fields import Field

CompiledField = collections.namedtuple(
    'CompiledField',
    'name getter to_value call required takes_serializer')


class SerializerBase(Field):
    _field_map = {}


def compile_field(field, name, serializer_cls):
    """Resolve ``field``, declared as ``name``, into a CompiledField."""
    getter = field.as_getter(name, serializer_cls)
    if getter is None:
        getter = serializer_cls.default_getter(field.attr or name)
    # None unless the subclass changes the value; skipped per row otherwise.
    to_value = field.to_value if field._is_to_value_overridden() else None
    return CompiledField(field.label or name, getter, to_value, field.call,
                         field.required, field.getter_takes_serializer)


class SerializerMeta(type):
    """Moves :class:`Field` attributes off the class into a field map.

    Base-class fields come first, in declaration order. A subclass that
    redeclares a field replaces it in place.
    """

    def __new__(mcs, name, bases, attrs):
        declared = [(key, value) for key, value in attrs.items()
                    if isinstance(value, Field)]
        for key, _ in declared:
            del attrs[key]
        cls = super(SerializerMeta, mcs).__new__(mcs, name, bases, attrs)

        field_map = {}
        for base in reversed(cls.__mro__):
            if issubclass(base, SerializerBase):
                field_map.update(base._field_map)
        field_map.update(declared)

        cls._field_map = field_map
        cls._compiled_fields = tuple(compile_field(field, key, cls)
                                     for key, field in field_map.items())
        return cls


class Serializer(six.with_metaclass(SerializerMeta, SerializerBase)):
    """:class:`Serializer` turns objects into plain, typed dicts.

    A serializer is defined by subclassing :class:`Serializer` and adding
    each :class:`Field` as a class variable. The result is ready for
    ``json.dump`` or a ``csv.DictWriter``: ::

        class ResultSerializer(Serializer):
            seed = IntField()
            test_metric = FloatField(label='metric')

        ResultSerializer(result).data
        # {'seed': 0, 'metric': 0.81}

    A serializer is itself a :class:`Field`, so one can be nested in
    another. A value rejected by its field (``ValueError``/``TypeError``) is
    reported as a :class:`hyperagg.exceptions.ConfigError` naming the field.

    :param instance: The object or objects to serialize.
    :param bool many: Serialize ``instance`` as a collection, to a list.
    :param str prefix: Prepended (with a dot) to field names in error
        messages, e.g. the config section the values came from.
    """
    #: The default getter used if :meth:`Field.as_getter` returns None.
    default_getter = operator.attrgetter

    def __init__(self, instance=None, many=False, prefix=None, **kwargs):
        super(Serializer, self).__init__(**kwargs)
        self.instance = instance
        self.many = many
        self.prefix = prefix
        self._data = None

    @classmethod
    def field_names(cls):
        """The output names of all declared fields, in declaration order."""
        return [field.name for field in cls._compiled_fields]

    def _key(self, name):
        return '{0}.{1}'.format(self.prefix, name) if self.prefix else name

    def _fetch(self, field, instance):
        if field.takes_serializer:
            return field.getter(self, instance)
        value = field.getter(instance)
        if value is None and not field.required:
            return None
        if field.call:
            value = value()
        if field.to_value is not None:
            try:
                value = field.to_value(value)
            except (TypeError, ValueError) as e:
                raise ConfigError(str(e), key=self._key(field.name))
        return value

    def _serialize(self, instance):
        row = {}
        for field in self._compiled_fields:
            try:
                row[field.name] = self._fetch(field, instance)
            except (KeyError, AttributeError):
                if field.required:
                    raise
        return row

    def to_value(self, instance):
        if self.many:
            return [self._serialize(item) for item in instance]
        return self._serialize(instance)

    @property
    def data(self):
        """The serialized data, computed on first access."""
        if self._data is None:
            self._data = self.to_value(self.instance)
        return self._data


class DictSerializer(Serializer):
    """:class:`DictSerializer` reads ``dicts`` instead of objects.

    Fields fetch with ``operator.itemgetter`` instead of
    ``operator.attrgetter``. This is how config sections are coerced: ::

        class ModelSection(DictSerializer):
            depth = IntField(minimum=1, required=False)
            lr = FloatField(required=False)

        ModelSection({'depth': '2', 'lr': '0.01'}).data
        # {'depth': 2, 'lr': 0.01}
    """
    default_getter = operator.itemgetter
