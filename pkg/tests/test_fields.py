from types import SimpleNamespace
import unittest

from hyperagg.fields import (
    BoolField, CapField, ChoiceField, Field, FloatField, FloatListField,
    IntField, IntListField, MethodField, ProbabilityField, StrField)


class TestFields(unittest.TestCase):

    def test_to_value_noop(self):
        self.assertEqual(Field().to_value(5), 5)
        self.assertEqual(Field().to_value('a'), 'a')
        self.assertEqual(Field().to_value(None), None)

    def test_as_getter_none(self):
        self.assertEqual(Field().as_getter(None, None), None)

    def test_is_to_value_overridden(self):
        class MetricField(Field):
            def to_value(self, value):
                return value

        self.assertFalse(Field()._is_to_value_overridden())
        self.assertTrue(MetricField()._is_to_value_overridden())
        self.assertTrue(IntField()._is_to_value_overridden())

    def test_str_field(self):
        field = StrField()
        self.assertEqual(field.to_value('GHC'), 'GHC')
        self.assertEqual(field.to_value(5), '5')

    def test_int_field(self):
        field = IntField()
        self.assertEqual(field.to_value(5), 5)
        self.assertEqual(field.to_value('5'), 5)
        self.assertEqual(field.to_value(5.0), 5)
        with self.assertRaises(ValueError):
            field.to_value(5.4)
        with self.assertRaises(ValueError):
            field.to_value('5.4')

    def test_int_field_minimum(self):
        field = IntField(minimum=1)
        self.assertEqual(field.to_value('1'), 1)
        with self.assertRaises(ValueError):
            field.to_value(0)

    def test_cap_field(self):
        field = CapField(minimum=1)
        self.assertEqual(field.to_value('16'), 16)
        self.assertIsNone(field.to_value('inf'))
        self.assertIsNone(field.to_value('None'))
        self.assertIsNone(field.to_value(float('inf')))
        with self.assertRaises(ValueError):
            field.to_value('0')

    def test_float_field(self):
        field = FloatField()
        self.assertEqual(field.to_value(5.2), 5.2)
        self.assertEqual(field.to_value('5.5'), 5.5)
        for value in ('nan', 'inf', float('-inf')):
            with self.assertRaises(ValueError):
                field.to_value(value)

    def test_float_field_bounds(self):
        self.assertEqual(FloatField(minimum=0.0).to_value('0'), 0.0)
        with self.assertRaises(ValueError):
            FloatField(minimum=0.0).to_value('-0.1')
        with self.assertRaises(ValueError):
            FloatField(positive=True).to_value(0.0)

    def test_probability_field(self):
        field = ProbabilityField()
        self.assertEqual(field.to_value('0.5'), 0.5)
        self.assertEqual(field.to_value(0), 0.0)
        for value in (1.0, '-0.1', 2):
            with self.assertRaises(ValueError):
                field.to_value(value)

    def test_bool_field(self):
        field = BoolField()
        self.assertTrue(field.to_value(True))
        self.assertFalse(field.to_value(False))
        self.assertTrue(field.to_value(1))
        self.assertFalse(field.to_value(0))
        for text in ('true', 'Yes', 'on', '1'):
            self.assertTrue(field.to_value(text))
        for text in ('false', 'NO', 'off', '0'):
            self.assertFalse(field.to_value(text))
        with self.assertRaises(ValueError):
            field.to_value('sometimes')

    def test_choice_field(self):
        field = ChoiceField(('GHC', 'GHM'))
        self.assertEqual(field.to_value('ghm'), 'GHM')
        self.assertEqual(field.to_value(' GHC '), 'GHC')
        with self.assertRaises(ValueError) as ctx:
            field.to_value('GAT')
        self.assertIn('GHC, GHM', str(ctx.exception))

    def test_list_fields(self):
        self.assertEqual(IntListField().to_value('0, 1,2'), [0, 1, 2])
        self.assertEqual(IntListField().to_value((3, 4)), [3, 4])
        self.assertEqual(IntListField().to_value(''), [])
        self.assertEqual(FloatListField().to_value('0.1,0.5'), [0.1, 0.5])
        with self.assertRaises(ValueError):
            IntListField().to_value('0,x')

    def test_method_field(self):
        class FakeSerializer(object):
            def get_mean(self, obj):
                return obj.mean

            def spread(self, obj):
                return obj.high - obj.low

        serializer = FakeSerializer()

        fn = MethodField().as_getter('mean', serializer)
        self.assertEqual(fn(SimpleNamespace(mean=0.8)), 0.8)

        fn = MethodField('spread').as_getter('mean', serializer)
        self.assertEqual(fn(SimpleNamespace(high=3, low=1)), 2)

        self.assertTrue(MethodField.getter_takes_serializer)

    def test_field_label(self):
        field = StrField(label='arch')
        self.assertEqual(field.label, 'arch')


if __name__ == '__main__':
    unittest.main()
