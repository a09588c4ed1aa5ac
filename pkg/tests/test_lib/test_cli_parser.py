import argparse
import contextlib
import io
import unittest

from gbd_design._libs.cli_parser import create_cli_parser


def _parse(args):
    return create_cli_parser().value.parse_args(args)


class TestCliParser(unittest.TestCase):
    def test_create_cli_parser_ok(self):
        result = create_cli_parser()

        assert result.success
        assert isinstance(result.value, argparse.ArgumentParser)
        self.assertIsNone(result.detail)

    def test_parse_optimize(self):
        args = _parse(['--debug', 'optimize', '--spec', 'spec.json', '--seed', '7', '--workers', '2',
                       '--t-total', '50'])

        self.assertEqual('optimize', args.command)
        self.assertTrue(args.debug)
        self.assertFalse(args.quiet)
        self.assertEqual(('spec.json', None, 7, 2, 50), (args.spec, args.out, args.seed, args.workers, args.t_total))

    def test_parse_design_commands(self):
        args = _parse(['compare', '--spec', 's.json', '--design', 'a.csv', '--design', 'b.csv', '--out', 'out'])
        self.assertEqual(['a.csv', 'b.csv'], args.design)
        self.assertEqual('csv', args.format)
        self.assertEqual('out', args.out)

        args = _parse(['variances', '--spec', 's.json', '--design', 'a.csv', '--format', 'JSON'])
        self.assertEqual('json', args.format)

        args = _parse(['curve', '--spec', 's.json', '--design', 'a.csv', '--k-max', '0', '--seed', '3'])
        self.assertEqual((0, 3), (args.k_max, args.seed))

        args = _parse(['evaluate', '--spec', 's.json', '--design', 'a.csv'])
        self.assertFalse(hasattr(args, 'format'))

    def test_parse_without_command(self):
        args = _parse(['--version'])

        self.assertTrue(args.version)
        self.assertIsNone(args.command)

    def test_parse_invalid_arguments(self):
        invalid = (['optimize'],
                   ['evaluate', '--spec', 's.json'],
                   ['optimize', '--spec', 's.json', '--workers', '0'],
                   ['optimize', '--spec', 's.json', '--seed', '-1'],
                   ['optimize', '--spec', 's.json', '--seed', str(2 ** 64)],
                   ['curve', '--spec', 's.json', '--design', 'a.csv', '--k-max', 'x'],
                   ['compare', '--spec', 's.json', '--design', 'a.csv', '--format', 'xml'])
        for args in invalid:
            with self.assertRaises(SystemExit, msg=str(args)), contextlib.redirect_stderr(io.StringIO()):
                _parse(args)


if __name__ == '__main__':
    unittest.main()
