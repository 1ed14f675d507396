import six
import types


class Field(object):
    """:class:`Field` maps an attribute (or dict key) to a typed value.

    Fields are declared on a :class:`hyperagg.serializer.Serializer` and are
    used in both directions: turning result objects into plain dicts for
    JSON/CSV output, and coercing the strings of a config file into typed
    hyperparameters. Subclass this to make custom fields; for most cases
    overriding :meth:`Field.to_value` is enough.

    :param str attr: The attribute to get on the object, using the same format
        as ``operator.attrgetter``. If this is not supplied, the name this
        field was assigned to on the serializer will be used.
    :param bool call: Whether the value should be called after it is retrieved
        from the object.
    :param str label: A label to use as the name of the serialized field
        instead of using the attribute name of the field.
    :param bool required: Whether the field is required. If set to ``False``,
        a missing attribute is skipped and :meth:`Field.to_value` is not
        called for ``None``.
    """
    #: Set to ``True`` if the getter returned from :meth:`Field.as_getter`
    #: requires the serializer to be passed in as the first argument.
    getter_takes_serializer = False

    def __init__(self, attr=None, call=False, label=None, required=True):
        self.attr = attr
        self.call = call
        self.label = label
        self.required = required

    def to_value(self, value):
        """Transform (and validate) the fetched value.

        Raise ``ValueError`` or ``TypeError`` to reject a value; the
        serializer reports it together with the field name.

        :param value: The value fetched from the object being serialized.
        """
        return value
    to_value._hyperagg_base_implementation = True

    def _is_to_value_overridden(self):
        to_value = self.to_value
        # If to_value isn't a method, it must have been overridden.
        if not isinstance(to_value, types.MethodType):
            return True
        return not getattr(to_value, '_hyperagg_base_implementation', False)

    def as_getter(self, serializer_field_name, serializer_cls):
        """Returns a function that fetches an attribute from an object.

        Return ``None`` to use the default getter for the serializer defined in
        :attr:`Serializer.default_getter`.

        :param str serializer_field_name: The name this field was assigned to
            on the serializer.
        :param serializer_cls: The :class:`Serializer` this field is a part of.
        """
        return None


class StrField(Field):
    """A :class:`Field` that converts the value to a string."""
    to_value = staticmethod(six.text_type)


class IntField(Field):
    """A :class:`Field` that converts the value to an integer.

    :param int minimum: Smallest accepted value.
    """

    def __init__(self, minimum=None, **kwargs):
        super(IntField, self).__init__(**kwargs)
        self.minimum = minimum

    def to_value(self, value):
        if isinstance(value, float) and not value.is_integer():
            raise ValueError('expected an integer, got {0!r}'.format(value))
        value = int(value)
        if self.minimum is not None and value < self.minimum:
            raise ValueError('must be >= {0}, got {1}'.format(
                self.minimum, value))
        return value


class CapField(IntField):
    """An :class:`IntField` where ``inf`` or ``none`` mean no cap."""

    def to_value(self, value):
        if value is None or (isinstance(value, six.string_types) and
                             value.strip().lower() in ('inf', 'none', '')):
            return None
        if isinstance(value, float) and value == float('inf'):
            return None
        return super(CapField, self).to_value(value)


class FloatField(Field):
    """A :class:`Field` that converts the value to a float.

    :param float minimum: Smallest accepted value.
    :param bool positive: Reject zero as well as negatives.
    """

    def __init__(self, minimum=None, positive=False, **kwargs):
        super(FloatField, self).__init__(**kwargs)
        self.minimum = minimum
        self.positive = positive

    def to_value(self, value):
        value = float(value)
        if value != value or value in (float('inf'), float('-inf')):
            raise ValueError('must be finite, got {0}'.format(value))
        if self.positive and value <= 0.0:
            raise ValueError('must be > 0, got {0}'.format(value))
        if self.minimum is not None and value < self.minimum:
            raise ValueError('must be >= {0}, got {1}'.format(
                self.minimum, value))
        return value


class ProbabilityField(FloatField):
    """A :class:`FloatField` restricted to ``[0, 1)`` (dropout rates)."""

    def to_value(self, value):
        value = super(ProbabilityField, self).to_value(value)
        if not 0.0 <= value < 1.0:
            raise ValueError('must lie in [0, 1), got {0}'.format(value))
        return value


_TRUE = ('1', 'true', 'yes', 'on')
_FALSE = ('0', 'false', 'no', 'off')


class BoolField(Field):
    """A :class:`Field` that converts the value to a boolean.

    Strings are parsed (``true``/``false``, ``yes``/``no``, ``on``/``off``,
    ``1``/``0``) instead of being tested for emptiness.
    """

    def to_value(self, value):
        if isinstance(value, six.string_types):
            lowered = value.strip().lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError('expected a boolean, got {0!r}'.format(value))
        return bool(value)


class ChoiceField(Field):
    """A :class:`Field` whose value must be one of ``choices``.

    :param choices: The accepted values. Strings are matched
        case-insensitively and returned in their canonical spelling.
    """

    def __init__(self, choices, **kwargs):
        super(ChoiceField, self).__init__(**kwargs)
        self.choices = tuple(choices)
        self._canonical = dict(
            (six.text_type(c).lower(), c) for c in self.choices)

    def to_value(self, value):
        key = six.text_type(value).strip().lower()
        if key not in self._canonical:
            raise ValueError('expected one of {0}, got {1!r}'.format(
                ', '.join(six.text_type(c) for c in self.choices), value))
        return self._canonical[key]


class IntListField(Field):
    """Integer lists, written ``0,1,2`` in config files."""

    def to_value(self, value):
        if isinstance(value, six.string_types):
            parts = [p for p in value.replace(' ', '').split(',') if p]
            return [int(p) for p in parts]
        return [int(v) for v in value]


class FloatListField(Field):
    """Float lists, written ``0.1,0.5`` in config files."""

    def to_value(self, value):
        if isinstance(value, six.string_types):
            parts = [p for p in value.replace(' ', '').split(',') if p]
            return [float(p) for p in parts]
        return [float(v) for v in value]


class MethodField(Field):
    """A :class:`Field` that calls a method on the :class:`Serializer`.

    This is useful if a value is derived from several attributes, for
    example the mean of a list of per-seed results: ::

        class SummarySerializer(Serializer):
            mean = MethodField()

            def get_mean(self, report):
                return report.summary.mean

    :param str method: The method on the serializer to call. Defaults to
        ``'get_<field name>'``.
    """
    getter_takes_serializer = True

    def __init__(self, method=None, **kwargs):
        super(MethodField, self).__init__(**kwargs)
        self.method = method

    def as_getter(self, serializer_field_name, serializer_cls):
        method_name = self.method
        if method_name is None:
            method_name = 'get_{0}'.format(serializer_field_name)
        return getattr(serializer_cls, method_name)
