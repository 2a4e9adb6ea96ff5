import pytest

from lrpipe.commands import lock_dir, locked, populate


def test_populate(tmpdir, capsys):
    path = tmpdir / 'output.txt'
    populate(path, path.write, 'content')
    assert path.read() == 'content'

    populate(path, path.write, 'other')
    assert path.read() == 'content'
    assert 'Nothing to be done' in capsys.readouterr().out


def test_populate_cleanup(tmpdir):
    path = tmpdir / 'output.txt'

    def fail():
        path.write('partial')
        raise ZeroDivisionError

    with pytest.raises(RuntimeError):
        populate(path, fail)
    assert not path.exists()

    with pytest.raises(FileNotFoundError):
        populate(path, lambda: None)


def test_locked(tmpdir):
    with locked(tmpdir) as lock:
        assert lock.exists()
        with pytest.raises(FileExistsError):
            lock_dir(tmpdir)
    assert not lock.exists()

    with pytest.raises(ZeroDivisionError):
        with locked(tmpdir):
            raise ZeroDivisionError
    assert not (tmpdir / '.lock').exists()
